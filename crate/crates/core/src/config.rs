//! Run configuration: every tunable default in one TOML file with a section
//! per module. Unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::classifier::ClassifierConfig;
use crate::corpus::{StyleMarkers, StyleMix};
use crate::dialogue::{DialogueConfig, LmConfig, TrainConfig};
use crate::error::{Error, Result};
use crate::retrieval::POLITE_THRESHOLD;
use crate::style::{FusionConfig, LftConfig, RlConfig};

/// Environment variable naming the default config file.
pub const CONFIG_ENV: &str = "COURTESY_CONFIG";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n: usize,
    pub grammar_seed: u64,
    pub markers: StyleMarkers,
    pub mix: StyleMix,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n: 1000,
            grammar_seed: 0,
            markers: StyleMarkers::default(),
            mix: StyleMix::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetrievalConfig {
    pub threshold: f64,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        RetrievalConfig {
            threshold: POLITE_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VocabConfig {
    /// Most frequent tokens kept after the reserved entries.
    pub max_tokens: usize,
}

impl Default for VocabConfig {
    fn default() -> Self {
        VocabConfig { max_tokens: 10_000 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    /// Pretrained embeddings in word2vec text format.
    pub embeddings: Option<PathBuf>,
    /// Profanity list replacing the built-in one.
    pub profanity: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub synth: SynthConfig,
    pub vocab: VocabConfig,
    pub classifier: ClassifierConfig,
    pub dialogue: DialogueConfig,
    pub lm: LmConfig,
    pub train: TrainConfig,
    pub fusion: FusionConfig,
    pub lft: LftConfig,
    pub rl: RlConfig,
    pub retrieval: RetrievalConfig,
    pub paths: PathsConfig,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Usage(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text).map_err(|e| Error::Usage(format!("{}: {e}", path.display())))
    }

    /// The file named by `COURTESY_CONFIG`, or defaults when it is unset.
    pub fn from_env() -> Result<Self> {
        match std::env::var_os(CONFIG_ENV) {
            Some(p) if !p.is_empty() => Self::load(Path::new(&p)),
            _ => Ok(Self::default()),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.synth.markers.validate()?;
        if self.vocab.max_tokens == 0 {
            return Err(Error::usage("vocab.max_tokens must be positive"));
        }
        self.classifier.validate()?;
        self.dialogue.validate()?;
        self.lm.validate()?;
        self.train.validate()?;
        self.fusion.validate()?;
        self.rl.validate()?;
        if !(0.0..=1.0).contains(&self.lft.target_score) {
            return Err(Error::usage("lft.target_score outside [0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.retrieval.threshold) {
            return Err(Error::usage("retrieval.threshold outside [0, 1]"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_carry_reference_values() {
        let c = RunConfig::default();
        assert_eq!(c.fusion.alpha, 0.5);
        assert_eq!(c.rl.beta, 2.0);
        assert_eq!(c.rl.baseline, 0.5);
        assert_eq!(c.retrieval.threshold, 0.8);
        assert_eq!(c.train.lr, 0.001);
        assert_eq!(c.train.batch_size, 96);
        assert_eq!(c.dialogue.dropout, 0.2);
        assert_eq!(c.dialogue.embed_dim, 300);
        assert_eq!(c.classifier.embed_dim, 300);
        assert_eq!(c.lft.target_score, 1.0);
        assert_eq!(c.vocab.max_tokens, 10_000);
    }

    #[test]
    fn toml_round_trip_and_partial_files() {
        let c = RunConfig::default();
        assert_eq!(RunConfig::from_toml(&c.to_toml()).unwrap(), c);
        let partial = RunConfig::from_toml("seed = 9\n[rl]\nbeta = 1.0\n").unwrap();
        assert_eq!(partial.seed, 9);
        assert_eq!(partial.rl.beta, 1.0);
        assert_eq!(partial.rl.baseline, 0.5);
    }

    #[test]
    fn unknown_keys_and_bad_values_are_rejected() {
        assert!(RunConfig::from_toml("sede = 1\n").is_err());
        assert!(RunConfig::from_toml("[rl]\nbeta2 = 1.0\n").is_err());
        assert!(RunConfig::from_toml("[fusion]\nalpha = 2.0\n").is_err());
        assert!(RunConfig::from_toml("[retrieval]\nthreshold = -1.0\n").is_err());
    }
}
