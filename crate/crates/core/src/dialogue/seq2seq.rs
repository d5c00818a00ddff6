use super::DialogueConfig;
use crate::corpus::{Vocab, PAD};
use crate::error::{Error, Result};
use crate::layers::{flatten_time_major, mask_column, Linear, Lstm, LstmState, MASKED_LOGIT};
use crate::numerics::{xavier, Float, Graph, ParamId, ParamStore, Rng, Tensor, Var};

#[derive(Debug, Clone)]
struct Layout {
    embedding: ParamId,
    encoder: Vec<(Lstm, Lstm)>,
    bridge_h: Linear,
    bridge_c: Linear,
    decoder: Vec<Lstm>,
    att_source: Linear,
    att_query: Linear,
    att_v: ParamId,
    combine: Linear,
    output: Linear,
}

/// Encoder/attention/decoder dialogue model. The encoder is a stack of
/// bidirectional LSTM layers, the final top-layer states are projected to
/// initialize every decoder layer, and additive attention reads the encoder
/// outputs from the top decoder layer.
#[derive(Debug, Clone)]
pub struct Seq2seq {
    pub config: DialogueConfig,
    pub vocab: Vocab,
    pub params: ParamStore,
    layout: Layout,
}

/// Encoder results for a batch, consumed by [`Seq2seq::step`].
#[derive(Debug, Clone)]
pub struct Encoded {
    /// `[B, S*2H]`: encoder outputs laid side by side per row.
    outputs: Var,
    /// `[B, S*A]`: attention projection of each encoder output.
    keys: Var,
    /// `[B, S]`: 0 on real positions, a large negative value on padding.
    bias: Var,
    pub init: Vec<LstmState>,
}

impl Seq2seq {
    pub fn new(config: DialogueConfig, vocab: Vocab, embeddings: Option<Tensor>, rng: &mut Rng) -> Result<Self> {
        config.validate()?;
        let mut store = ParamStore::new();
        let (v, d, h, a) = (vocab.len(), config.embed_dim, config.hidden, config.attention);
        let table = match embeddings {
            Some(t) if t.shape() == [v, d] => t,
            Some(t) => {
                return Err(Error::Shape {
                    op: "seq2seq embeddings",
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
        let mut encoder = Vec::with_capacity(config.encoder_layers);
        for l in 0..config.encoder_layers {
            let input = if l == 0 { d } else { 2 * h };
            let fwd = Lstm::new(&mut store, &format!("encoder.{l}.fwd"), input, h, rng)?;
            let bwd = Lstm::new(&mut store, &format!("encoder.{l}.bwd"), input, h, rng)?;
            encoder.push((fwd, bwd));
        }
        let n_dec = config.decoder_layers;
        let bridge_h = Linear::new(&mut store, "bridge.h", 2 * h, n_dec * h, true, rng)?;
        let bridge_c = Linear::new(&mut store, "bridge.c", 2 * h, n_dec * h, true, rng)?;
        let decoder = (0..n_dec)
            .map(|l| Lstm::new(&mut store, &format!("decoder.{l}"), if l == 0 { d } else { h }, h, rng))
            .collect::<Result<Vec<_>>>()?;
        let att_source = Linear::new(&mut store, "attention.source", 2 * h, a, false, rng)?;
        let att_query = Linear::new(&mut store, "attention.query", h, a, true, rng)?;
        let att_v = store.add("attention.v", xavier(&[1, a], rng)?)?;
        let combine = Linear::new(&mut store, "combine", 3 * h, h, true, rng)?;
        let output = Linear::new(&mut store, "output", h, v, true, rng)?;
        Ok(Seq2seq {
            config,
            vocab,
            params: store,
            layout: Layout {
                embedding,
                encoder,
                bridge_h,
                bridge_c,
                decoder,
                att_source,
                att_query,
                att_v,
                combine,
                output,
            },
        })
    }

    pub fn from_tensors<'a>(
        config: DialogueConfig,
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

    /// Time-major source embeddings `[S*B, d]` of right-padded sources, with
    /// the position-0 row of source `b` multiplied by `label_scale[b]`.
    pub fn embed_sources<T: Float>(
        &self,
        g: &mut Graph<'_, T>,
        sources: &[&[usize]],
        label_scale: Option<&[f64]>,
    ) -> Result<Var> {
        if sources.is_empty() || sources.iter().any(|s| s.is_empty()) {
            return Err(Error::usage("cannot encode an empty source"));
        }
        let b = sources.len();
        let steps = sources.iter().map(|s| s.len()).max().expect("non-empty");
        let ids: Vec<Vec<usize>> = (0..steps)
            .map(|t| sources.iter().map(|s| s.get(t).copied().unwrap_or(PAD)).collect())
            .collect();
        let table = g.param(self.layout.embedding);
        let x = g.gather(table, &flatten_time_major(&ids))?;
        let Some(scales) = label_scale else {
            return Ok(x);
        };
        if scales.len() != b {
            return Err(Error::usage("one label scale per source required"));
        }
        let first = g.slice_rows(x, 0, b)?;
        let col = g.constant(Tensor::column(scales.iter().map(|&s| T::of(s)).collect())?)?;
        let scaled = g.mul_col(first, col)?;
        if steps == 1 {
            return Ok(scaled);
        }
        let rest = g.slice_rows(x, b, steps * b)?;
        g.concat_rows(&[scaled, rest])
    }

    /// Encodes right-padded sources. `label_scale[b]`, when given, multiplies
    /// the embedding at position 0 of source `b`.
    pub fn encode<T: Float>(
        &self,
        g: &mut Graph<'_, T>,
        sources: &[&[usize]],
        label_scale: Option<&[f64]>,
        training: bool,
        rng: &mut Rng,
    ) -> Result<Encoded> {
        let mut x = self.embed_sources(g, sources, label_scale)?;
        let b = sources.len();
        let h = self.config.hidden;
        let lengths: Vec<usize> = sources.iter().map(|s| s.len()).collect();
        let steps = *lengths.iter().max().expect("non-empty");
        let rate = self.config.dropout;
        x = g.dropout(x, rate, training, rng)?;
        let masks = (0..steps)
            .map(|t| g.constant(mask_column(lengths.iter().map(|&l| t < l))?))
            .collect::<Result<Vec<_>>>()?;

        let mut outputs = Vec::new();
        let mut finals = (Vec::new(), Vec::new());
        for (l, (fwd, bwd)) in self.layout.encoder.iter().enumerate() {
            let init = fwd.zero_state(g, b)?;
            let (fo, fs) = fwd.run(g, x, steps, Some(&masks), init, false)?;
            let (bo, bs) = bwd.run(g, x, steps, Some(&masks), init, true)?;
            outputs = (0..steps)
                .map(|t| g.concat_cols(&[fo[t], bo[t]]))
                .collect::<Result<Vec<_>>>()?;
            finals = (vec![fs.h, bs.h], vec![fs.c, bs.c]);
            if l + 1 < self.layout.encoder.len() {
                x = if steps == 1 {
                    outputs[0]
                } else {
                    g.concat_rows(&outputs)?
                };
                x = g.dropout(x, rate, training, rng)?;
            }
        }

        let stacked = if steps == 1 {
            outputs[0]
        } else {
            g.concat_rows(&outputs)?
        };
        let keys_flat = self.layout.att_source.forward(g, stacked)?;
        let keys = if steps == 1 {
            keys_flat
        } else {
            let parts = (0..steps)
                .map(|t| g.slice_rows(keys_flat, t * b, (t + 1) * b))
                .collect::<Result<Vec<_>>>()?;
            g.concat_cols(&parts)?
        };
        let outputs = if steps == 1 {
            outputs[0]
        } else {
            g.concat_cols(&outputs)?
        };
        let mut bias = vec![T::zero(); b * steps];
        for (r, &len) in lengths.iter().enumerate() {
            bias[r * steps + len..(r + 1) * steps].fill(T::of(MASKED_LOGIT));
        }
        let bias = g.constant(Tensor::matrix(b, steps, bias)?)?;

        let hcat = g.concat_cols(&finals.0)?;
        let ccat = g.concat_cols(&finals.1)?;
        let hs = self.layout.bridge_h.forward(g, hcat)?;
        let cs = self.layout.bridge_c.forward(g, ccat)?;
        let init = (0..self.layout.decoder.len())
            .map(|l| {
                Ok(LstmState {
                    h: g.slice_cols(hs, l * h, (l + 1) * h)?,
                    c: g.slice_cols(cs, l * h, (l + 1) * h)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Encoded {
            outputs,
            keys,
            bias,
            init,
        })
    }

    /// One decoder step from the previous tokens `prev[b]`. Updates `states`
    /// and returns the pre-vocabulary feature `[B, H]`.
    pub fn step_features<T: Float>(
        &self,
        g: &mut Graph<'_, T>,
        enc: &Encoded,
        states: &mut [LstmState],
        prev: &[usize],
        training: bool,
        rng: &mut Rng,
    ) -> Result<Var> {
        let rate = self.config.dropout;
        let table = g.param(self.layout.embedding);
        let mut x = g.gather(table, prev)?;
        x = g.dropout(x, rate, training, rng)?;
        let last = self.layout.decoder.len() - 1;
        for (l, cell) in self.layout.decoder.iter().enumerate() {
            states[l] = cell.step(g, x, states[l], None)?;
            x = states[l].h;
            if l < last {
                x = g.dropout(x, rate, training, rng)?;
            }
        }
        let top = x;
        let query = self.layout.att_query.forward(g, top)?;
        let mixed = g.tile_add(enc.keys, query)?;
        let mixed = g.tanh(mixed)?;
        let v = g.param(self.layout.att_v);
        let scores = g.block_dot(mixed, v)?;
        let scores = g.add(scores, enc.bias)?;
        let weights = g.softmax(scores)?;
        let context = g.block_weighted_sum(weights, enc.outputs)?;
        let joined = g.concat_cols(&[top, context])?;
        let feature = self.layout.combine.forward(g, joined)?;
        let feature = g.tanh(feature)?;
        g.dropout(feature, rate, training, rng)
    }

    /// Vocabulary logits for stacked features `[N, H] -> [N, V]`.
    pub fn logits<T: Float>(&self, g: &mut Graph<'_, T>, features: Var) -> Result<Var> {
        self.layout.output.forward(g, features)
    }
}
