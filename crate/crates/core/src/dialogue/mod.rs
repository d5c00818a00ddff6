//! Base dialogue model, the standalone language model, maximum-likelihood
//! training with token loss masking, decoding, perplexity and WER.

mod decode;
mod lm;
mod seq2seq;
mod train;

use serde::{Deserialize, Serialize};

pub use decode::{decode, run_decode, DecodeMode, Decoded, LmPolicy, Policy, Seq2seqPolicy};
pub use lm::{LanguageModel, LmConfig};
pub use seq2seq::{Encoded, Seq2seq};
pub use train::{
    example_perplexity, lm_perplexity, mle_loss, perplexity, train_dialogue, train_dialogue_with, train_lm,
    weighted_log_likelihood, wer, LmTrainLog, PerplexityScope, TrainConfig, TrainLog,
};

use crate::corpus::{
    DialogueTriple, TokenSeq, Vocab, BOS, EOS, LABEL, LABEL_NEUTRAL, LABEL_POLITE, LABEL_RUDE, PAD, SEP, UNK,
};
use crate::error::{Error, Result};

/// Default list of very offensive words never produced and never trained on.
pub const DEFAULT_PROFANITY: [&str; 10] = [
    "fuck",
    "fucking",
    "motherfucker",
    "shit",
    "bullshit",
    "bitch",
    "bastard",
    "asshole",
    "cunt",
    "whore",
];

pub fn default_profanity() -> Vec<String> {
    DEFAULT_PROFANITY.iter().map(|s| s.to_string()).collect()
}

/// Reads a profanity list: one word per line, `#` starts a comment.
pub fn load_profanity(path: &std::path::Path) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(path)?;
    Ok(text
        .lines()
        .map(|l| l.split('#').next().unwrap_or("").trim().to_lowercase())
        .filter(|l| !l.is_empty())
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DialogueConfig {
    pub embed_dim: usize,
    pub hidden: usize,
    pub attention: usize,
    pub encoder_layers: usize,
    pub decoder_layers: usize,
    pub dropout: f64,
    pub max_len: usize,
    pub profanity: Vec<String>,
}

impl Default for DialogueConfig {
    fn default() -> Self {
        DialogueConfig {
            embed_dim: 300,
            hidden: 128,
            attention: 128,
            encoder_layers: 2,
            decoder_layers: 4,
            dropout: 0.2,
            max_len: 30,
            profanity: default_profanity(),
        }
    }
}

impl DialogueConfig {
    pub fn validate(&self) -> Result<()> {
        if [
            self.embed_dim,
            self.hidden,
            self.attention,
            self.encoder_layers,
            self.decoder_layers,
            self.max_len,
        ]
        .contains(&0)
        {
            return Err(Error::usage("dialogue model sizes must be positive"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::usage(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        Ok(())
    }
}

/// Which ids are excluded from the loss and which can never be emitted.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenMask {
    loss: Vec<bool>,
    blocked: Vec<bool>,
}

impl TokenMask {
    pub fn new<S: AsRef<str>>(vocab: &Vocab, profanity: &[S]) -> Self {
        let mut loss = vec![false; vocab.len()];
        loss[UNK] = true;
        for w in profanity {
            if vocab.contains(w.as_ref()) {
                loss[vocab.id(w.as_ref())] = true;
            }
        }
        let mut blocked = loss.clone();
        for id in [PAD, BOS, SEP, LABEL, LABEL_POLITE, LABEL_NEUTRAL, LABEL_RUDE] {
            blocked[id] = true;
        }
        TokenMask { loss, blocked }
    }

    /// True for ids that contribute no training loss (UNK and profanity).
    pub fn loss_masked(&self, id: usize) -> bool {
        self.loss[id]
    }

    /// True for ids a decoder may never emit.
    pub fn blocked(&self, id: usize) -> bool {
        self.blocked[id]
    }

    /// Softmax over the unblocked entries of `logits`; blocked entries get
    /// probability 0.
    pub fn distribution(&self, logits: &[f32]) -> Vec<f64> {
        let max = logits
            .iter()
            .zip(&self.blocked)
            .filter(|(_, b)| !**b)
            .map(|(&l, _)| l as f64)
            .fold(f64::NEG_INFINITY, f64::max);
        let mut out: Vec<f64> = logits
            .iter()
            .zip(&self.blocked)
            .map(|(&l, &b)| if b { 0.0 } else { (l as f64 - max).exp() })
            .collect();
        let total: f64 = out.iter().sum();
        for p in &mut out {
            *p /= total;
        }
        out
    }

    /// `[1, V]` additive bias with a large negative value on blocked ids.
    pub fn logit_bias(&self) -> Vec<f64> {
        self.blocked
            .iter()
            .map(|&b| if b { crate::layers::MASKED_LOGIT } else { 0.0 })
            .collect()
    }
}

/// How a training example conditions on a style label, if at all.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum StyleLabel {
    /// Source starts with LABEL, whose embedding is multiplied by the score.
    Scaled(f64),
    /// Source starts with one of the unscaled bin labels.
    Bin(usize),
}

/// One encoded context/response pair.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainExample {
    pub source: Vec<usize>,
    /// Response ids ending in EOS.
    pub target: Vec<usize>,
    /// `false` where the target token is excluded from the loss.
    pub mask: Vec<bool>,
    pub label: Option<StyleLabel>,
}

impl TrainExample {
    pub fn new(source: Vec<usize>, target: Vec<usize>, mask: &TokenMask) -> Result<Self> {
        if target.is_empty() {
            return Err(Error::usage("training example has an empty target"));
        }
        if source.is_empty() {
            return Err(Error::usage("training example has an empty source"));
        }
        let mask = target.iter().map(|&t| !mask.loss_masked(t)).collect();
        Ok(TrainExample {
            source,
            target,
            mask,
            label: None,
        })
    }

    /// Scale applied to the first source embedding (1 when unscaled).
    pub fn label_scale(&self) -> f64 {
        match self.label {
            Some(StyleLabel::Scaled(s)) => s,
            _ => 1.0,
        }
    }
}

fn truncated(vocab: &Vocab, tokens: &[String], max_len: usize) -> Vec<usize> {
    let mut ids = vocab.encode(tokens);
    ids.truncate(max_len);
    ids
}

/// Source ids for a context `u1 <eou> u2`, each turn cut to `max_len` tokens.
pub fn encode_context(vocab: &Vocab, u1: &[String], u2: &[String], max_len: usize) -> Vec<usize> {
    let mut src = truncated(vocab, u1, max_len);
    src.push(SEP);
    src.extend(truncated(vocab, u2, max_len));
    src
}

/// Response ids cut to `max_len - 1` tokens followed by EOS.
pub fn encode_response(vocab: &Vocab, tokens: &[String], max_len: usize) -> Vec<usize> {
    let mut ids = truncated(vocab, tokens, max_len.saturating_sub(1).max(1));
    ids.push(EOS);
    ids
}

pub fn make_example(triple: &DialogueTriple, vocab: &Vocab, max_len: usize, mask: &TokenMask) -> Result<TrainExample> {
    TrainExample::new(
        encode_context(vocab, &triple.u1, &triple.u2, max_len),
        encode_response(vocab, &triple.u3, max_len),
        mask,
    )
}

/// Examples for every context/response pair of a triple set: the last turn
/// given both earlier turns, and optionally the middle turn given the first.
pub fn make_examples(
    triples: &[DialogueTriple],
    vocab: &Vocab,
    max_len: usize,
    mask: &TokenMask,
    all_turns: bool,
) -> Result<Vec<TrainExample>> {
    let mut out = Vec::with_capacity(triples.len() * if all_turns { 2 } else { 1 });
    for t in triples {
        if all_turns && !t.u1.is_empty() && !t.u2.is_empty() {
            out.push(TrainExample::new(
                truncated(vocab, &t.u1, max_len),
                encode_response(vocab, &t.u2, max_len),
                mask,
            )?);
        }
        out.push(make_example(t, vocab, max_len, mask)?);
    }
    Ok(out)
}

/// Tokens of a decoded response (EOS and special ids removed).
pub fn response_tokens(vocab: &Vocab, ids: &[usize]) -> TokenSeq {
    vocab.decode_response(ids)
}
