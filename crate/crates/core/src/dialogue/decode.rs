use serde::{Deserialize, Serialize};

use super::{LanguageModel, Seq2seq, TokenMask};
use crate::corpus::{BOS, EOS};
use crate::error::{Error, Result};
use crate::layers::LstmState;
use crate::numerics::{Graph, Rng};

use super::seq2seq::Encoded;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DecodeMode {
    Greedy,
    Sample,
}

impl std::str::FromStr for DecodeMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "greedy" => Ok(DecodeMode::Greedy),
            "sample" => Ok(DecodeMode::Sample),
            other => Err(Error::usage(format!("unknown decode mode {other:?}"))),
        }
    }
}

/// A generated response.
#[derive(Debug, Clone, PartialEq)]
pub struct Decoded {
    /// Emitted ids, EOS excluded.
    pub tokens: Vec<usize>,
    /// Whether EOS was emitted before `max_len` ran out.
    pub finished: bool,
    /// Log-probability of every emitted id, EOS included when emitted.
    pub log_probs: Vec<f64>,
    /// The distribution each id was chosen from, when requested.
    pub distributions: Vec<Vec<f64>>,
}

/// Anything that yields next-token distributions for a batch of rows.
pub trait Policy {
    /// Distributions over the vocabulary for every row, given each row's
    /// previously emitted token.
    fn next(&mut self, prev: &[usize]) -> Result<Vec<Vec<f64>>>;
}

/// Greedy or sampled decoding shared by all policies. Rows stop at EOS or
/// after `max_len` steps; greedy ties go to the lowest id.
pub fn run_decode(
    policy: &mut dyn Policy,
    rows: usize,
    mode: DecodeMode,
    max_len: usize,
    keep_distributions: bool,
    rng: &mut Rng,
) -> Result<Vec<Decoded>> {
    if max_len == 0 {
        return Err(Error::usage("max_len must be at least 1"));
    }
    let mut out: Vec<Decoded> = (0..rows)
        .map(|_| Decoded {
            tokens: Vec::new(),
            finished: false,
            log_probs: Vec::new(),
            distributions: Vec::new(),
        })
        .collect();
    let mut prev = vec![BOS; rows];
    for _ in 0..max_len {
        let dists = policy.next(&prev)?;
        for (r, dist) in dists.into_iter().enumerate() {
            if out[r].finished {
                continue;
            }
            let id = match mode {
                DecodeMode::Greedy => argmax(&dist),
                DecodeMode::Sample => rng.categorical(&dist),
            };
            let d = &mut out[r];
            d.log_probs.push(dist[id].ln());
            if keep_distributions {
                d.distributions.push(dist);
            }
            if id == EOS {
                d.finished = true;
            } else {
                d.tokens.push(id);
            }
            prev[r] = id;
        }
        if out.iter().all(|d| d.finished) {
            break;
        }
    }
    Ok(out)
}

pub(crate) fn argmax(p: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in p.iter().enumerate() {
        if v > p[best] {
            best = i;
        }
    }
    best
}

/// Step-by-step inference over a [`Seq2seq`] for a batch of sources.
pub struct Seq2seqPolicy<'a> {
    model: &'a Seq2seq,
    graph: Graph<'a, f32>,
    encoded: Encoded,
    states: Vec<LstmState>,
    mask: TokenMask,
    rng: Rng,
}

impl<'a> Seq2seqPolicy<'a> {
    pub fn new(model: &'a Seq2seq, sources: &[&[usize]], label_scale: Option<&[f64]>) -> Result<Self> {
        let mut graph = Graph::new(&model.params);
        let mut rng = Rng::seed(0);
        let encoded = model.encode(&mut graph, sources, label_scale, false, &mut rng)?;
        let states = encoded.init.clone();
        Ok(Seq2seqPolicy {
            model,
            graph,
            encoded,
            states,
            mask: TokenMask::new(&model.vocab, &model.config.profanity),
            rng,
        })
    }
}

impl Policy for Seq2seqPolicy<'_> {
    fn next(&mut self, prev: &[usize]) -> Result<Vec<Vec<f64>>> {
        let g = &mut self.graph;
        let f = self
            .model
            .step_features(g, &self.encoded, &mut self.states, prev, false, &mut self.rng)?;
        let logits = self.model.logits(g, f)?;
        let t = g.value(logits);
        Ok((0..t.rows()).map(|r| self.mask.distribution(t.row_slice(r))).collect())
    }
}

/// Step-by-step inference over a [`LanguageModel`], starting from BOS.
pub struct LmPolicy<'a> {
    model: &'a LanguageModel,
    graph: Graph<'a, f32>,
    states: Vec<LstmState>,
    mask: TokenMask,
    rng: Rng,
}

impl<'a> LmPolicy<'a> {
    pub fn new(model: &'a LanguageModel, rows: usize) -> Result<Self> {
        let mut graph = Graph::new(&model.params);
        let states = model.zero_states(&mut graph, rows)?;
        Ok(LmPolicy {
            model,
            graph,
            states,
            mask: TokenMask::new(&model.vocab, &model.config.profanity),
            rng: Rng::seed(0),
        })
    }
}

impl Policy for LmPolicy<'_> {
    fn next(&mut self, prev: &[usize]) -> Result<Vec<Vec<f64>>> {
        let g = &mut self.graph;
        let f = self
            .model
            .step_features(g, &mut self.states, prev, false, &mut self.rng)?;
        let logits = self.model.logits(g, f)?;
        let t = g.value(logits);
        Ok((0..t.rows()).map(|r| self.mask.distribution(t.row_slice(r))).collect())
    }
}

const DECODE_CHUNK: usize = 64;

/// Decodes every source with a [`Seq2seq`], in chunks of rows.
pub fn decode(
    model: &Seq2seq,
    sources: &[&[usize]],
    label_scale: Option<&[f64]>,
    mode: DecodeMode,
    max_len: usize,
    rng: &mut Rng,
) -> Result<Vec<Decoded>> {
    let mut out = Vec::with_capacity(sources.len());
    for (i, chunk) in sources.chunks(DECODE_CHUNK).enumerate() {
        let scales = label_scale.map(|s| &s[i * DECODE_CHUNK..i * DECODE_CHUNK + chunk.len()]);
        let mut policy = Seq2seqPolicy::new(model, chunk, scales)?;
        out.extend(run_decode(&mut policy, chunk.len(), mode, max_len, false, rng)?);
    }
    Ok(out)
}
