//! Tokenization, vocabularies, corpus files and the synthetic corpus.

mod data;
mod embeddings;
mod synth;
mod tokenize;
mod vocab;

pub use data::{
    load_corpus, load_lm_text, load_politeness, load_triples, shuffled, split_by_ratio, write_lm_text,
    write_politeness, write_triples, Corpus, CorpusFormat, DialogueTriple, Politeness, StyledUtterance, TokenSeq,
};
pub use embeddings::load_pretrained_embeddings;
pub use synth::{gen_synthetic, gen_synthetic_mix, label_by_rule, StyleMarkers, StyleMix, SyntheticCorpus};
pub use tokenize::{detokenize, tokenize};
pub use vocab::{Vocab, BOS, EOS, LABEL, LABEL_NEUTRAL, LABEL_POLITE, LABEL_RUDE, PAD, RESERVED, SEP, UNK};
