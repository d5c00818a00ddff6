use serde::{Deserialize, Serialize};

use crate::classifier::ClassifierModel;
use crate::corpus::{Vocab, LABEL, LABEL_NEUTRAL, LABEL_POLITE, LABEL_RUDE};
use crate::dialogue::{decode, response_tokens, DecodeMode, Decoded, Seq2seq, StyleLabel, TrainExample};
use crate::error::{Error, Result};
use crate::numerics::Rng;

/// Lowest score of the polite bin.
pub const POLITE_MIN: f64 = 0.8;
/// Lowest score of the neutral bin; lower scores are rude.
pub const NEUTRAL_MIN: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LftMode {
    /// One label whose embedding is scaled by the politeness score.
    Continuous,
    /// Three unscaled labels, one per score bin.
    Discrete,
}

impl std::str::FromStr for LftMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "continuous" => Ok(LftMode::Continuous),
            "discrete" => Ok(LftMode::Discrete),
            other => Err(Error::usage(format!("unknown label mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LftConfig {
    pub mode: LftMode,
    /// Politeness score requested at decoding time.
    pub target_score: f64,
}

impl Default for LftConfig {
    fn default() -> Self {
        LftConfig {
            mode: LftMode::Continuous,
            target_score: 1.0,
        }
    }
}

fn check_score(score: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&score) {
        return Err(Error::usage(format!("politeness score {score} outside [0, 1]")));
    }
    Ok(())
}

/// Bin label id for a score: polite `[0.8, 1]`, neutral `[0.2, 0.8)`, rude
/// `[0, 0.2)`.
pub fn score_bin(score: f64) -> Result<usize> {
    check_score(score)?;
    Ok(if score >= POLITE_MIN {
        LABEL_POLITE
    } else if score >= NEUTRAL_MIN {
        LABEL_NEUTRAL
    } else {
        LABEL_RUDE
    })
}

/// The labelled source and its label for a politeness score.
pub fn lft_source(source: &[usize], mode: LftMode, score: f64) -> Result<(Vec<usize>, StyleLabel)> {
    check_score(score)?;
    let (first, label) = match mode {
        LftMode::Continuous => (LABEL, StyleLabel::Scaled(score)),
        LftMode::Discrete => {
            let bin = score_bin(score)?;
            (bin, StyleLabel::Bin(bin))
        }
    };
    let mut out = Vec::with_capacity(source.len() + 1);
    out.push(first);
    out.extend_from_slice(source);
    Ok((out, label))
}

/// Labels every example with the classifier's score of its ground-truth
/// response.
pub fn lft_prepare(
    examples: &[TrainExample],
    classifier: &ClassifierModel,
    vocab: &Vocab,
    mode: LftMode,
) -> Result<Vec<TrainExample>> {
    let texts: Vec<Vec<String>> = examples.iter().map(|e| response_tokens(vocab, &e.target)).collect();
    if let Some(i) = texts.iter().position(Vec::is_empty) {
        return Err(Error::usage(format!("example {i} has no response tokens to score")));
    }
    let scores = classifier.score_batch(&texts)?;
    examples
        .iter()
        .zip(scores)
        .map(|(e, s)| {
            let (source, label) = lft_source(&e.source, mode, s)?;
            Ok(TrainExample {
                source,
                label: Some(label),
                ..e.clone()
            })
        })
        .collect()
}

/// Decodes unlabelled sources from a label-fine-tuned model at the requested
/// politeness score.
pub fn lft_decode(
    model: &Seq2seq,
    sources: &[&[usize]],
    target_score: f64,
    mode: LftMode,
    decode_mode: DecodeMode,
    max_len: usize,
    rng: &mut Rng,
) -> Result<Vec<Decoded>> {
    let labelled = sources
        .iter()
        .map(|s| lft_source(s, mode, target_score).map(|(src, _)| src))
        .collect::<Result<Vec<_>>>()?;
    let refs: Vec<&[usize]> = labelled.iter().map(Vec::as_slice).collect();
    let scales = match mode {
        LftMode::Continuous => Some(vec![target_score; refs.len()]),
        LftMode::Discrete => None,
    };
    decode(model, &refs, scales.as_deref(), decode_mode, max_len, rng)
}
