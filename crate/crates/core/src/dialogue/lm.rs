use serde::{Deserialize, Serialize};

use crate::corpus::{Vocab, PAD};
use crate::error::{Error, Result};
use crate::layers::{Linear, Lstm, LstmState};
use crate::numerics::{xavier, Float, Graph, ParamId, ParamStore, Rng, Tensor, Var};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LmConfig {
    pub embed_dim: usize,
    pub hidden: usize,
    pub layers: usize,
    pub dropout: f64,
    pub max_len: usize,
    pub profanity: Vec<String>,
}

impl Default for LmConfig {
    fn default() -> Self {
        LmConfig {
            embed_dim: 300,
            hidden: 128,
            layers: 2,
            dropout: 0.2,
            max_len: 30,
            profanity: super::default_profanity(),
        }
    }
}

impl LmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.embed_dim == 0 || self.hidden == 0 || self.layers == 0 || self.max_len == 0 {
            return Err(Error::usage("language model sizes must be positive"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::usage(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
struct Layout {
    embedding: ParamId,
    layers: Vec<Lstm>,
    output: Linear,
}

/// Stacked-LSTM next-token language model.
#[derive(Debug, Clone)]
pub struct LanguageModel {
    pub config: LmConfig,
    pub vocab: Vocab,
    pub params: ParamStore,
    layout: Layout,
}

impl LanguageModel {
    pub fn new(config: LmConfig, vocab: Vocab, embeddings: Option<Tensor>, rng: &mut Rng) -> Result<Self> {
        config.validate()?;
        let mut store = ParamStore::new();
        let (v, d, h) = (vocab.len(), config.embed_dim, config.hidden);
        let table = match embeddings {
            Some(t) if t.shape() == [v, d] => t,
            Some(t) => {
                return Err(Error::Shape {
                    op: "lm embeddings",
                    lhs: t.shape().to_vec(),
                    rhs: vec![v, d],
                })
            }
            None => {
                let mut t: Tensor = xavier(&[v, d], rng)?;
                t.data_mut()[PAD * d..(PAD + 1) * d].fill(0.0);
                t
            }
        };
        let embedding = store.add("embedding", table)?;
        let layers = (0..config.layers)
            .map(|l| Lstm::new(&mut store, &format!("lstm.{l}"), if l == 0 { d } else { h }, h, rng))
            .collect::<Result<Vec<_>>>()?;
        let output = Linear::new(&mut store, "output", h, v, true, rng)?;
        Ok(LanguageModel {
            config,
            vocab,
            params: store,
            layout: Layout {
                embedding,
                layers,
                output,
            },
        })
    }

    pub fn from_tensors<'a>(
        config: LmConfig,
        vocab: Vocab,
        tensors: impl IntoIterator<Item = (&'a str, &'a Tensor)>,
    ) -> Result<Self> {
        let mut model = Self::new(config, vocab, None, &mut Rng::seed(0))?;
        model.params.load_from(tensors)?;
        Ok(model)
    }

    pub fn embedding_id(&self) -> ParamId {
        self.layout.embedding
    }

    pub fn zero_states<T: Float>(&self, g: &mut Graph<'_, T>, batch: usize) -> Result<Vec<LstmState>> {
        self.layout.layers.iter().map(|l| l.zero_state(g, batch)).collect()
    }

    /// One step: consumes `prev[b]`, returns the top hidden state `[B, H]`.
    pub fn step_features<T: Float>(
        &self,
        g: &mut Graph<'_, T>,
        states: &mut [LstmState],
        prev: &[usize],
        training: bool,
        rng: &mut Rng,
    ) -> Result<Var> {
        let rate = self.config.dropout;
        let table = g.param(self.layout.embedding);
        let mut x = g.gather(table, prev)?;
        x = g.dropout(x, rate, training, rng)?;
        for (l, cell) in self.layout.layers.iter().enumerate() {
            states[l] = cell.step(g, x, states[l], None)?;
            x = g.dropout(states[l].h, rate, training, rng)?;
        }
        Ok(x)
    }

    pub fn logits<T: Float>(&self, g: &mut Graph<'_, T>, features: Var) -> Result<Var> {
        self.layout.output.forward(g, features)
    }
}
