use serde::{Deserialize, Serialize};

use crate::dialogue::{
    run_decode, DecodeMode, Decoded, LanguageModel, LmPolicy, Policy, Seq2seq, Seq2seqPolicy, TokenMask,
};
use crate::error::{Error, Result};
use crate::numerics::Rng;

const FUSION_CHUNK: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FusionConfig {
    /// Weight of the dialogue model; the language model gets `1 - alpha`.
    pub alpha: f64,
}

impl Default for FusionConfig {
    fn default() -> Self {
        FusionConfig { alpha: 0.5 }
    }
}

impl FusionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::usage(format!("fusion alpha {} outside [0, 1]", self.alpha)));
        }
        Ok(())
    }
}

/// `alpha * p_s2s + (1 - alpha) * p_lm`, element-wise.
pub fn fuse_step(p_s2s: &[f64], p_lm: &[f64], cfg: &FusionConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    if p_s2s.len() != p_lm.len() {
        return Err(Error::usage(format!(
            "distributions over {} and {} ids cannot be fused",
            p_s2s.len(),
            p_lm.len()
        )));
    }
    let a = cfg.alpha;
    Ok(p_s2s.iter().zip(p_lm).map(|(&p, &q)| a * p + (1.0 - a) * q).collect())
}

/// Decoding policy mixing a dialogue model with a language model that reads
/// the same emitted prefix but never the context.
pub struct FusionPolicy<'a> {
    s2s: Seq2seqPolicy<'a>,
    lm: LmPolicy<'a>,
    cfg: FusionConfig,
    mask: TokenMask,
}

impl<'a> FusionPolicy<'a> {
    pub fn new(s2s: &'a Seq2seq, lm: &'a LanguageModel, sources: &[&[usize]], cfg: FusionConfig) -> Result<Self> {
        cfg.validate()?;
        if s2s.vocab != lm.vocab {
            return Err(Error::usage(
                "fusion needs a dialogue model and language model with the same vocabulary",
            ));
        }
        Ok(FusionPolicy {
            s2s: Seq2seqPolicy::new(s2s, sources, None)?,
            lm: LmPolicy::new(lm, sources.len())?,
            cfg,
            mask: TokenMask::new(&s2s.vocab, &s2s.config.profanity),
        })
    }
}

impl Policy for FusionPolicy<'_> {
    fn next(&mut self, prev: &[usize]) -> Result<Vec<Vec<f64>>> {
        let ps = self.s2s.next(prev)?;
        let qs = self.lm.next(prev)?;
        ps.iter()
            .zip(&qs)
            .map(|(p, q)| {
                let mut fused = fuse_step(p, q, &self.cfg)?;
                let leaked: f64 = fused
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| self.mask.blocked(*i))
                    .map(|(_, v)| v)
                    .sum();
                if leaked > 0.0 {
                    for (i, v) in fused.iter_mut().enumerate() {
                        *v = if self.mask.blocked(i) { 0.0 } else { *v / (1.0 - leaked) };
                    }
                }
                Ok(fused)
            })
            .collect()
    }
}

pub fn fusion_decode(
    s2s: &Seq2seq,
    lm: &LanguageModel,
    sources: &[&[usize]],
    cfg: &FusionConfig,
    mode: DecodeMode,
    max_len: usize,
    rng: &mut Rng,
) -> Result<Vec<Decoded>> {
    let mut out = Vec::with_capacity(sources.len());
    for chunk in sources.chunks(FUSION_CHUNK) {
        let mut policy = FusionPolicy::new(s2s, lm, chunk, *cfg)?;
        out.extend(run_decode(&mut policy, chunk.len(), mode, max_len, false, rng)?);
    }
    Ok(out)
}
