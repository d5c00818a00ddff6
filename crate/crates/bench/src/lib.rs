//! Small synthetic models shared by the benchmarks.

use courtesy::classifier::{ClassifierConfig, ClassifierModel};
use courtesy::corpus::{gen_synthetic, StyleMarkers, SyntheticCorpus, Vocab};
use courtesy::dialogue::{make_examples, DialogueConfig, LanguageModel, LmConfig, Seq2seq, TokenMask, TrainExample};
use courtesy::Rng;

pub struct Fixture {
    pub corpus: SyntheticCorpus,
    pub vocab: Vocab,
    pub classifier: ClassifierModel,
    pub seq2seq: Seq2seq,
    pub lm: LanguageModel,
    pub examples: Vec<TrainExample>,
}

pub fn fixture(n: usize) -> Fixture {
    let corpus = gen_synthetic(&StyleMarkers::default(), 0, n, &mut Rng::seed(1)).expect("synthetic corpus");
    let vocab = Vocab::build(
        corpus
            .triples
            .iter()
            .flat_map(|t| [t.u1.as_slice(), t.u2.as_slice(), t.u3.as_slice()])
            .chain(corpus.politeness.iter().map(|u| u.tokens.as_slice())),
        10_000,
    );
    let classifier =
        ClassifierModel::new(ClassifierConfig::default(), vocab.clone(), None, &mut Rng::seed(2)).expect("classifier");
    let dcfg = DialogueConfig {
        embed_dim: 64,
        hidden: 64,
        attention: 32,
        max_len: 16,
        ..DialogueConfig::default()
    };
    let seq2seq = Seq2seq::new(dcfg, vocab.clone(), None, &mut Rng::seed(3)).expect("seq2seq");
    let lcfg = LmConfig {
        embed_dim: 64,
        hidden: 64,
        max_len: 16,
        ..LmConfig::default()
    };
    let lm = LanguageModel::new(lcfg, vocab.clone(), None, &mut Rng::seed(4)).expect("language model");
    let mask = TokenMask::new(&vocab, &seq2seq.config.profanity);
    let examples = make_examples(&corpus.triples, &vocab, 16, &mask, false).expect("examples");
    Fixture {
        corpus,
        vocab,
        classifier,
        seq2seq,
        lm,
        examples,
    }
}
