//! Politeness strategies on top of the base dialogue model: late fusion with
//! a polite language model, label fine-tuning and classifier-reward
//! reinforcement learning.

mod fusion;
mod lft;
mod rl;

use serde::{Deserialize, Serialize};

pub use fusion::{fuse_step, fusion_decode, FusionConfig, FusionPolicy};
pub use lft::{lft_decode, lft_prepare, lft_source, score_bin, LftConfig, LftMode, NEUTRAL_MIN, POLITE_MIN};
pub use rl::{rl_loss, rl_sequence_weight, sample_responses, train_rl, RewardSign, RlConfig, RlLog, SampledResponse};

/// How a checkpointed dialogue model is meant to be decoded.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "strategy", rename_all = "kebab-case")]
pub enum StyleStrategy {
    Base,
    /// Base model re-scored by a separate language model checkpoint.
    Fusion {
        alpha: f64,
    },
    /// Sources must start with a style label; `target_score` is the default.
    Lft {
        mode: LftMode,
        target_score: f64,
    },
    Rl {
        beta: f64,
        baseline: f64,
        sign: RewardSign,
    },
}

#[cfg(test)]
mod tests;
