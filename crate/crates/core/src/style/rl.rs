use serde::{Deserialize, Serialize};

use crate::classifier::ClassifierModel;
use crate::corpus::EOS;
use crate::dialogue::{
    decode, response_tokens, train_dialogue_with, weighted_log_likelihood, DecodeMode, Seq2seq, StyleLabel, TokenMask,
    TrainConfig, TrainExample, TrainLog,
};
use crate::error::{Error, Result};
use crate::numerics::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RewardSign {
    EncouragePolite,
    EncourageRude,
}

impl std::str::FromStr for RewardSign {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "encourage-polite" | "polite" => Ok(RewardSign::EncouragePolite),
            "encourage-rude" | "rude" => Ok(RewardSign::EncourageRude),
            other => Err(Error::usage(format!("unknown reward sign {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RlConfig {
    /// Weight of the reinforcement term relative to the likelihood loss.
    pub beta: f64,
    /// Constant reward baseline.
    pub baseline: f64,
    pub sign: RewardSign,
    /// Sampled responses per context and batch.
    pub samples: usize,
    /// Divide each sample's summed log-probability by its length.
    pub length_normalize: bool,
}

impl Default for RlConfig {
    fn default() -> Self {
        RlConfig {
            beta: 2.0,
            baseline: 0.5,
            sign: RewardSign::EncouragePolite,
            samples: 1,
            length_normalize: false,
        }
    }
}

impl RlConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.beta.is_finite() || self.beta < 0.0 {
            return Err(Error::usage(format!(
                "RL weight {} must be finite and non-negative",
                self.beta
            )));
        }
        if !(0.0..=1.0).contains(&self.baseline) {
            return Err(Error::usage(format!("baseline {} outside [0, 1]", self.baseline)));
        }
        if self.samples == 0 {
            return Err(Error::usage("at least one sample per context is required"));
        }
        Ok(())
    }

    /// The reward after the sign convention: the score itself, or `1 - score`
    /// when rudeness is encouraged.
    pub fn effective_reward(&self, score: f64) -> f64 {
        match self.sign {
            RewardSign::EncouragePolite => score,
            RewardSign::EncourageRude => 1.0 - score,
        }
    }
}

/// A sampled response with its per-step log-probabilities and classifier
/// score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampledResponse {
    /// Emitted ids, including EOS when it was emitted.
    pub tokens: Vec<usize>,
    pub log_probs: Vec<f64>,
    /// Classifier politeness score of the response without EOS.
    pub reward: f64,
}

/// `-(R - R_b)`, the factor multiplying a sample's summed log-probability.
pub fn rl_sequence_weight(score: f64, cfg: &RlConfig) -> f64 {
    -(cfg.effective_reward(score) - cfg.baseline)
}

/// Reinforcement loss of one sample, with the reward held constant.
pub fn rl_loss(sample: &SampledResponse, cfg: &RlConfig) -> f64 {
    let mut total: f64 = sample.log_probs.iter().sum();
    if cfg.length_normalize && !sample.log_probs.is_empty() {
        total /= sample.log_probs.len() as f64;
    }
    rl_sequence_weight(sample.reward, cfg) * total
}

/// Samples one response per source and scores it. An empty response gets the
/// baseline as its reward, so it contributes no gradient.
pub fn sample_responses(
    model: &Seq2seq,
    classifier: &ClassifierModel,
    sources: &[&[usize]],
    label_scale: Option<&[f64]>,
    cfg: &RlConfig,
    rng: &mut Rng,
) -> Result<Vec<SampledResponse>> {
    let decoded = decode(
        model,
        sources,
        label_scale,
        DecodeMode::Sample,
        model.config.max_len,
        rng,
    )?;
    let texts: Vec<Vec<String>> = decoded
        .iter()
        .map(|d| response_tokens(&model.vocab, &d.tokens))
        .collect();
    let scorable: Vec<Vec<String>> = texts.iter().filter(|t| !t.is_empty()).cloned().collect();
    let mut scores = classifier.score_batch(&scorable)?.into_iter();
    let neutral = cfg.effective_reward(cfg.baseline);
    Ok(decoded
        .into_iter()
        .zip(&texts)
        .map(|(d, text)| {
            let mut tokens = d.tokens;
            if d.finished {
                tokens.push(EOS);
            }
            let reward = if text.is_empty() {
                neutral
            } else {
                scores.next().expect("one score per non-empty text")
            };
            SampledResponse {
                tokens,
                log_probs: d.log_probs,
                reward,
            }
        })
        .collect())
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RlLog {
    pub train: TrainLog,
    /// Mean effective reward of the samples drawn at each step.
    pub step_rewards: Vec<f64>,
}

/// Likelihood training plus `beta` times the reinforcement loss of sampled
/// responses. Samples are drawn without dropout from a dedicated random
/// stream, so `beta = 0` reproduces plain likelihood training exactly.
pub fn train_rl(
    model: &mut Seq2seq,
    data: &[TrainExample],
    classifier: &ClassifierModel,
    rl: &RlConfig,
    cfg: &TrainConfig,
    rng: &mut Rng,
) -> Result<RlLog> {
    rl.validate()?;
    let mut sample_rng = rng.fork(3);
    let mut step_rewards = Vec::new();
    let bias = TokenMask::new(&model.vocab, &model.config.profanity).logit_bias();
    let train = train_dialogue_with(model, data, cfg, rng, |m, g, batch, _| {
        let rows: Vec<&TrainExample> = batch.iter().flat_map(|e| std::iter::repeat_n(*e, rl.samples)).collect();
        let sources: Vec<&[usize]> = rows.iter().map(|e| e.source.as_slice()).collect();
        let scales: Option<Vec<f64>> = rows
            .iter()
            .any(|e| matches!(e.label, Some(StyleLabel::Scaled(_))))
            .then(|| rows.iter().map(|e| e.label_scale()).collect());
        let samples = sample_responses(m, classifier, &sources, scales.as_deref(), rl, &mut sample_rng)?;
        let mean = samples.iter().map(|s| rl.effective_reward(s.reward)).sum::<f64>() / samples.len() as f64;
        step_rewards.push(mean);
        if rl.beta == 0.0 {
            return Ok(None);
        }
        let denom = (batch.len() * rl.samples) as f64;
        let targets: Vec<&[usize]> = samples.iter().map(|s| s.tokens.as_slice()).collect();
        let weights: Vec<Vec<f64>> = samples
            .iter()
            .map(|s| {
                let mut w = rl.beta * rl_sequence_weight(s.reward, rl) / denom;
                if rl.length_normalize {
                    w /= s.tokens.len() as f64;
                }
                vec![w; s.tokens.len()]
            })
            .collect();
        let term = weighted_log_likelihood(
            m,
            g,
            &sources,
            scales.as_deref(),
            &targets,
            &weights,
            Some(&bias),
            false,
            &mut Rng::seed(0),
        )?;
        Ok(Some(term))
    })?;
    Ok(RlLog { train, step_rewards })
}
