//! Politeness classifier: embeddings, a bidirectional LSTM, convolution
//! filters of several widths over the concatenated forward/backward states,
//! max-pooling over time and a two-way softmax (rude, polite).

use serde::{Deserialize, Serialize};

use crate::corpus::{StyledUtterance, TokenSeq, Vocab, PAD};
use crate::error::{Error, Result};
use crate::layers::{apply_update, flatten_time_major, mask_column, Linear, Lstm, MASKED_LOGIT};
use crate::numerics::{softmax, xavier, AdamConfig, AdamState, Float, Graph, ParamId, ParamStore, Rng, Tensor, Var};

/// Output column of the polite class; column 0 is rude.
pub const POLITE: usize = 1;

const SCORE_CHUNK: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifierConfig {
    pub embed_dim: usize,
    pub hidden: usize,
    pub widths: Vec<usize>,
    pub filters: usize,
    pub activation: Activation,
    pub dropout: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub clip: f64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig {
            embed_dim: 300,
            hidden: 128,
            widths: vec![3, 4, 5],
            filters: 75,
            activation: Activation::Relu,
            dropout: 0.2,
            epochs: 3,
            batch_size: 96,
            lr: 0.001,
            clip: 5.0,
        }
    }
}

impl ClassifierConfig {
    pub fn validate(&self) -> Result<()> {
        if self.widths.is_empty() || self.widths.contains(&0) {
            return Err(Error::usage("classifier widths must be non-empty and >= 1"));
        }
        if self.filters == 0 || self.hidden == 0 || self.embed_dim == 0 || self.batch_size == 0 {
            return Err(Error::usage("classifier sizes must be positive"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::usage(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        Ok(())
    }

    pub fn max_width(&self) -> usize {
        self.widths.iter().copied().max().unwrap_or(1)
    }
}

#[derive(Debug, Clone)]
struct Layout {
    embedding: ParamId,
    forward: Lstm,
    backward: Lstm,
    convs: Vec<Linear>,
    output: Linear,
}

#[derive(Debug, Clone)]
pub struct ClassifierModel {
    pub config: ClassifierConfig,
    pub vocab: Vocab,
    pub params: ParamStore,
    layout: Layout,
}

/// Token ids for one batch, padded and time-major.
struct Batch {
    ids: Vec<Vec<usize>>,
    lengths: Vec<usize>,
}

impl ClassifierModel {
    /// A freshly initialized model. `embeddings`, when given, must be
    /// `[vocab.len(), embed_dim]`; otherwise the table is Xavier-initialized
    /// with a zero PAD row.
    pub fn new(config: ClassifierConfig, vocab: Vocab, embeddings: Option<Tensor>, rng: &mut Rng) -> Result<Self> {
        config.validate()?;
        let mut store = ParamStore::new();
        let (v, d, h) = (vocab.len(), config.embed_dim, config.hidden);
        let table = match embeddings {
            Some(t) => {
                if t.shape() != [v, d] {
                    return Err(Error::Shape {
                        op: "classifier embeddings",
                        lhs: t.shape().to_vec(),
                        rhs: vec![v, d],
                    });
                }
                t
            }
            None => {
                let mut t: Tensor = xavier(&[v, d], rng)?;
                t.data_mut()[PAD * d..(PAD + 1) * d].fill(0.0);
                t
            }
        };
        let embedding = store.add("embedding", table)?;
        let forward = Lstm::new(&mut store, "lstm.fwd", d, h, rng)?;
        let backward = Lstm::new(&mut store, "lstm.bwd", d, h, rng)?;
        let convs = config
            .widths
            .iter()
            .map(|&u| Linear::new(&mut store, &format!("conv{u}"), u * 2 * h, config.filters, true, rng))
            .collect::<Result<Vec<_>>>()?;
        let output = Linear::new(&mut store, "output", config.widths.len() * config.filters, 2, true, rng)?;
        Ok(ClassifierModel {
            config,
            vocab,
            params: store,
            layout: Layout {
                embedding,
                forward,
                backward,
                convs,
                output,
            },
        })
    }

    /// Rebuilds a model from stored tensors.
    pub fn from_tensors<'a>(
        config: ClassifierConfig,
        vocab: Vocab,
        tensors: impl IntoIterator<Item = (&'a str, &'a Tensor)>,
    ) -> Result<Self> {
        let mut model = Self::new(config, vocab, None, &mut Rng::seed(0))?;
        model.params.load_from(tensors)?;
        Ok(model)
    }

    fn batch(&self, seqs: &[&[usize]]) -> Batch {
        let min_len = self.config.max_width();
        let lengths: Vec<usize> = seqs.iter().map(|s| s.len().max(min_len)).collect();
        let steps = lengths.iter().copied().max().unwrap_or(min_len);
        let ids = (0..steps)
            .map(|t| seqs.iter().map(|s| s.get(t).copied().unwrap_or(PAD)).collect())
            .collect();
        Batch { ids, lengths }
    }

    /// Class logits `[B, 2]` from embedded inputs `[T*B, d]`.
    fn logits_from_embedded<T: Float>(
        &self,
        g: &mut Graph<'_, T>,
        emb: Var,
        batch: &Batch,
        training: bool,
        rng: &mut Rng,
    ) -> Result<Var> {
        let steps = batch.ids.len();
        let b = batch.lengths.len();
        let rate = self.config.dropout;
        let emb = g.dropout(emb, rate, training, rng)?;
        let masks = (0..steps)
            .map(|t| g.constant(mask_column(batch.lengths.iter().map(|&l| t < l))?))
            .collect::<Result<Vec<_>>>()?;
        let l = &self.layout;
        let init = l.forward.zero_state(g, b)?;
        let (fwd, _) = l.forward.run(g, emb, steps, Some(&masks), init, false)?;
        let (bwd, _) = l.backward.run(g, emb, steps, Some(&masks), init, true)?;
        let states = (0..steps)
            .map(|t| g.concat_cols(&[fwd[t], bwd[t]]))
            .collect::<Result<Vec<_>>>()?;

        let mut pooled = Vec::with_capacity(self.config.widths.len());
        for (&u, conv) in self.config.widths.iter().zip(&l.convs) {
            let windows = steps + 1 - u;
            let rows = (0..windows)
                .map(|s| g.concat_cols(&states[s..s + u]))
                .collect::<Result<Vec<_>>>()?;
            let stacked = if windows == 1 { rows[0] } else { g.concat_rows(&rows)? };
            let pre = conv.forward(g, stacked)?;
            let act = match self.config.activation {
                Activation::Relu => g.relu(pre)?,
                Activation::Tanh => g.tanh(pre)?,
            };
            let act = if batch.lengths.iter().all(|&len| len == steps) {
                act
            } else {
                let f = self.config.filters;
                let mut bias = vec![T::zero(); windows * b * f];
                for s in 0..windows {
                    for (r, &len) in batch.lengths.iter().enumerate() {
                        if s + u > len {
                            bias[(s * b + r) * f..(s * b + r + 1) * f].fill(T::of(MASKED_LOGIT));
                        }
                    }
                }
                let bias = g.constant(Tensor::matrix(windows * b, f, bias)?)?;
                g.add(act, bias)?
            };
            pooled.push(g.max_blocks(act, windows)?);
        }
        let features = if pooled.len() == 1 {
            pooled[0]
        } else {
            g.concat_cols(&pooled)?
        };
        let features = g.dropout(features, rate, training, rng)?;
        l.output.forward(g, features)
    }

    fn logits<T: Float>(&self, g: &mut Graph<'_, T>, batch: &Batch, training: bool, rng: &mut Rng) -> Result<Var> {
        let table = g.param(self.layout.embedding);
        let emb = g.gather(table, &flatten_time_major(&batch.ids))?;
        self.logits_from_embedded(g, emb, batch, training, rng)
    }

    /// Mean cross-entropy of `labels` (0 rude, 1 polite) over a batch. The
    /// graph may be bound to any float copy of `self.params`.
    pub fn loss<T: Float>(
        &self,
        g: &mut Graph<'_, T>,
        seqs: &[&[usize]],
        labels: &[usize],
        training: bool,
        rng: &mut Rng,
    ) -> Result<Var> {
        if seqs.is_empty() || seqs.len() != labels.len() {
            return Err(Error::usage("loss needs one label per non-empty sequence"));
        }
        if seqs.iter().any(|s| s.is_empty()) {
            return Err(Error::usage("cannot classify an empty utterance"));
        }
        let batch = self.batch(seqs);
        let logits = self.logits(g, &batch, training, rng)?;
        let logp = g.log_softmax(logits)?;
        let picked = g.pick(logp, labels)?;
        let mean = g.mean(picked)?;
        g.scale(mean, -T::one())
    }

    /// `[P(rude), P(polite)]` for each id sequence, computed in chunks.
    pub fn probabilities(&self, seqs: &[&[usize]]) -> Result<Vec<[f64; 2]>> {
        if seqs.iter().any(|s| s.is_empty()) {
            return Err(Error::usage("cannot score an empty utterance"));
        }
        let mut out = Vec::with_capacity(seqs.len());
        let mut rng = Rng::seed(0);
        for chunk in seqs.chunks(SCORE_CHUNK) {
            let mut g = Graph::new(&self.params);
            let batch = self.batch(chunk);
            let logits = self.logits(&mut g, &batch, false, &mut rng)?;
            let logits = g.value(logits).cast::<f64>();
            let probs = softmax(&logits);
            for r in 0..chunk.len() {
                out.push([probs.at(r, 0), probs.at(r, POLITE)]);
            }
        }
        Ok(out)
    }

    pub fn score_ids(&self, ids: &[usize]) -> Result<f64> {
        Ok(self.probabilities(&[ids])?[0][POLITE])
    }

    /// Polite-class probability of a tokenized utterance.
    pub fn score<S: AsRef<str>>(&self, tokens: &[S]) -> Result<f64> {
        self.score_ids(&self.vocab.encode(tokens))
    }

    pub fn score_batch<S: AsRef<str>>(&self, texts: &[Vec<S>]) -> Result<Vec<f64>> {
        let ids: Vec<Vec<usize>> = texts.iter().map(|t| self.vocab.encode(t)).collect();
        let refs: Vec<&[usize]> = ids.iter().map(Vec::as_slice).collect();
        Ok(self.probabilities(&refs)?.into_iter().map(|p| p[POLITE]).collect())
    }

    /// Per-token L2 norm of the gradient of P(polite) with respect to the
    /// token's input embedding.
    pub fn saliency<S: AsRef<str>>(&self, tokens: &[S]) -> Result<Vec<f64>> {
        if tokens.is_empty() {
            return Err(Error::usage("cannot score an empty utterance"));
        }
        let ids = self.vocab.encode(tokens);
        let batch = self.batch(&[&ids]);
        let d = self.config.embed_dim;
        let table = self.params.get(self.layout.embedding);
        let flat = flatten_time_major(&batch.ids);
        let rows: Vec<f32> = flat.iter().flat_map(|&id| table.row_slice(id).to_vec()).collect();
        let mut g = Graph::new(&self.params);
        let emb = g.leaf(Tensor::matrix(flat.len(), d, rows)?, true)?;
        let logits = self.logits_from_embedded(&mut g, emb, &batch, false, &mut Rng::seed(0))?;
        let probs = g.softmax(logits)?;
        let polite = g.pick(probs, &[POLITE])?;
        let total = g.sum(polite)?;
        let grads = g.backward(total)?;
        let ge = grads.node(emb).expect("embedding leaf requires grad");
        Ok((0..tokens.len())
            .map(|t| {
                ge.row_slice(t)
                    .iter()
                    .map(|&x| (x as f64) * (x as f64))
                    .sum::<f64>()
                    .sqrt()
            })
            .collect())
    }

    pub fn accuracy(&self, data: &[StyledUtterance]) -> Result<f64> {
        if data.is_empty() {
            return Err(Error::usage("accuracy of an empty set"));
        }
        let texts: Vec<&TokenSeq> = data.iter().map(|u| &u.tokens).collect();
        let ids: Vec<Vec<usize>> = texts.iter().map(|t| self.vocab.encode(t)).collect();
        let refs: Vec<&[usize]> = ids.iter().map(Vec::as_slice).collect();
        let probs = self.probabilities(&refs)?;
        let correct = probs
            .iter()
            .zip(data)
            .filter(|(p, u)| usize::from(p[POLITE] > p[0]) == u.label.label() as usize)
            .count();
        Ok(correct as f64 / data.len() as f64)
    }
}

/// Trains `model` in place; returns the mean training loss of each epoch.
pub fn fit(model: &mut ClassifierModel, data: &[StyledUtterance], rng: &mut Rng) -> Result<Vec<f64>> {
    if data.is_empty() {
        return Err(Error::usage("classifier training set is empty"));
    }
    let polite = data.iter().filter(|u| u.label.label() == 1).count();
    if polite == 0 || polite == data.len() {
        return Err(Error::usage("classifier training needs both classes"));
    }
    if data.iter().any(|u| u.tokens.is_empty()) {
        return Err(Error::usage("classifier training set contains an empty utterance"));
    }
    let encoded: Vec<(Vec<usize>, usize)> = data
        .iter()
        .map(|u| (model.vocab.encode(&u.tokens), u.label.label() as usize))
        .collect();
    let cfg = model.config.clone();
    let mut adam = AdamState::new(
        &model.params,
        AdamConfig {
            lr: cfg.lr,
            ..AdamConfig::default()
        },
    );
    let mut order_rng = rng.fork(1);
    let mut dropout_rng = rng.fork(2);
    let frozen = [(model.layout.embedding, PAD)];
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..encoded.len()).collect();
        order_rng.shuffle(&mut order);
        let mut total = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let seqs: Vec<&[usize]> = chunk.iter().map(|&i| encoded[i].0.as_slice()).collect();
            let labels: Vec<usize> = chunk.iter().map(|&i| encoded[i].1).collect();
            let grads = {
                let mut g = Graph::new(&model.params);
                let loss = model.loss(&mut g, &seqs, &labels, true, &mut dropout_rng)?;
                total += g.value(loss).item() as f64 * chunk.len() as f64;
                g.backward(loss)?.into_params()
            };
            apply_update(&mut model.params, &mut adam, grads, cfg.clip, &frozen)?;
        }
        let mean = total / encoded.len() as f64;
        log::info!("classifier epoch {}: loss {mean:.4}", epoch + 1);
        history.push(mean);
    }
    Ok(history)
}

pub fn train_classifier(
    data: &[StyledUtterance],
    vocab: Vocab,
    config: ClassifierConfig,
    embeddings: Option<Tensor>,
    rng: &mut Rng,
) -> Result<ClassifierModel> {
    let mut model = ClassifierModel::new(config, vocab, embeddings, &mut rng.fork(0))?;
    fit(&mut model, data, rng)?;
    Ok(model)
}

/// Utterances scoring strictly above `threshold`, in input order.
pub fn filter_polite(model: &ClassifierModel, utterances: &[TokenSeq], threshold: f64) -> Result<Vec<TokenSeq>> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::usage(format!("threshold {threshold} outside [0, 1]")));
    }
    let scoreable: Vec<&TokenSeq> = utterances.iter().filter(|u| !u.is_empty()).collect();
    let ids: Vec<Vec<usize>> = scoreable.iter().map(|u| model.vocab.encode(u)).collect();
    let refs: Vec<&[usize]> = ids.iter().map(Vec::as_slice).collect();
    let probs = model.probabilities(&refs)?;
    Ok(scoreable
        .into_iter()
        .zip(probs)
        .filter(|(_, p)| p[POLITE] > threshold)
        .map(|(u, _)| u.clone())
        .collect())
}
