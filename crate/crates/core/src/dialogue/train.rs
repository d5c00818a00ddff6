use serde::{Deserialize, Serialize};

use super::decode::{decode, DecodeMode};
use super::{encode_response, make_examples, LanguageModel, Seq2seq, TokenMask, TrainExample};
use crate::corpus::{DialogueTriple, TokenSeq, Vocab, BOS, EOS, PAD};
use crate::error::{Error, Result};
use crate::evalkit::word_error_rate;
use crate::layers::{apply_update, flatten_time_major};
use crate::numerics::{log_softmax, AdamConfig, AdamState, Float, Graph, Rng, Tensor, Var};

const EVAL_CHUNK: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub clip: f64,
    /// Epochs without dev-perplexity improvement before the language model
    /// stops.
    pub patience: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 10,
            batch_size: 96,
            lr: 0.001,
            clip: 5.0,
            patience: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::usage("batch size must be positive"));
        }
        if self.lr.is_nan() || self.lr <= 0.0 {
            return Err(Error::usage("learning rate must be positive"));
        }
        Ok(())
    }

    fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            ..AdamConfig::default()
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    /// Mean per-token training NLL of each epoch.
    pub epoch_losses: Vec<f64>,
    pub steps: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PerplexityScope {
    /// Every turn after the first, each given the turns before it.
    AllTurns,
    /// The last turn given the first two.
    LastTurn,
}

fn padded_time_major(seqs: &[&[usize]], steps: usize, offset: usize) -> Vec<Vec<usize>> {
    (0..steps)
        .map(|t| {
            seqs.iter()
                .map(|s| {
                    if t < offset {
                        BOS
                    } else {
                        s.get(t - offset).copied().unwrap_or(PAD)
                    }
                })
                .collect()
        })
        .collect()
}

/// Teacher-forced vocabulary logits `[T*B, V]`, time-major, where `T` is the
/// longest target.
fn seq2seq_logits<T: Float>(
    model: &Seq2seq,
    g: &mut Graph<'_, T>,
    sources: &[&[usize]],
    label_scale: Option<&[f64]>,
    targets: &[&[usize]],
    training: bool,
    rng: &mut Rng,
) -> Result<Var> {
    if targets.len() != sources.len() || targets.iter().any(|t| t.is_empty()) {
        return Err(Error::usage("each source needs a non-empty target"));
    }
    let enc = model.encode(g, sources, label_scale, training, rng)?;
    let mut states = enc.init.clone();
    let steps = targets.iter().map(|t| t.len()).max().expect("non-empty");
    let inputs = padded_time_major(targets, steps, 1);
    let mut features = Vec::with_capacity(steps);
    for prev in &inputs {
        features.push(model.step_features(g, &enc, &mut states, prev, training, rng)?);
    }
    let stacked = if steps == 1 {
        features[0]
    } else {
        g.concat_rows(&features)?
    };
    model.logits(g, stacked)
}

fn lm_logits<T: Float>(
    model: &LanguageModel,
    g: &mut Graph<'_, T>,
    targets: &[&[usize]],
    training: bool,
    rng: &mut Rng,
) -> Result<Var> {
    if targets.is_empty() || targets.iter().any(|t| t.is_empty()) {
        return Err(Error::usage("language model targets must be non-empty"));
    }
    let mut states = model.zero_states(g, targets.len())?;
    let steps = targets.iter().map(|t| t.len()).max().expect("non-empty");
    let inputs = padded_time_major(targets, steps, 1);
    let mut features = Vec::with_capacity(steps);
    for prev in &inputs {
        features.push(model.step_features(g, &mut states, prev, training, rng)?);
    }
    let stacked = if steps == 1 {
        features[0]
    } else {
        g.concat_rows(&features)?
    };
    model.logits(g, stacked)
}

/// `sum_b sum_t weights[b][t] * log p(targets[b][t])` from time-major logits.
fn weighted_sum<T: Float>(
    g: &mut Graph<'_, T>,
    logits: Var,
    targets: &[&[usize]],
    weights: &[Vec<f64>],
    blocked_bias: Option<&[f64]>,
) -> Result<Var> {
    let steps = g.value(logits).rows() / targets.len();
    let logits = match blocked_bias {
        Some(bias) => {
            let row = g.constant(Tensor::row(bias.iter().map(|&b| T::of(b)).collect())?)?;
            g.add_row(logits, row)?
        }
        None => logits,
    };
    let logp = g.log_softmax(logits)?;
    let picked = g.pick(logp, &flatten_time_major(&padded_time_major(targets, steps, 0)))?;
    let w: Vec<T> = (0..steps)
        .flat_map(|t| weights.iter().map(move |w| T::of(w.get(t).copied().unwrap_or(0.0))))
        .collect();
    let w = g.constant(Tensor::column(w)?)?;
    let weighted = g.mul(picked, w)?;
    g.sum(weighted)
}

/// Scalar `sum_b sum_t weights[b][t] * log p(targets[b][t] | prefix, source)`
/// under teacher forcing. With `blocked_bias` the distribution excludes the
/// blocked ids, matching what decoding samples from.
#[allow(clippy::too_many_arguments)]
pub fn weighted_log_likelihood<T: Float>(
    model: &Seq2seq,
    g: &mut Graph<'_, T>,
    sources: &[&[usize]],
    label_scale: Option<&[f64]>,
    targets: &[&[usize]],
    weights: &[Vec<f64>],
    blocked_bias: Option<&[f64]>,
    training: bool,
    rng: &mut Rng,
) -> Result<Var> {
    let logits = seq2seq_logits(model, g, sources, label_scale, targets, training, rng)?;
    weighted_sum(g, logits, targets, weights, blocked_bias)
}

fn batch_scales(batch: &[&TrainExample]) -> Option<Vec<f64>> {
    if batch
        .iter()
        .any(|e| matches!(e.label, Some(super::StyleLabel::Scaled(_))))
    {
        Some(batch.iter().map(|e| e.label_scale()).collect())
    } else {
        None
    }
}

/// Batch MLE loss: the mean over examples of each example's summed masked
/// negative log-likelihood. Also returns the summed NLL and the number of
/// counted tokens.
pub fn mle_loss<T: Float>(
    model: &Seq2seq,
    g: &mut Graph<'_, T>,
    batch: &[&TrainExample],
    training: bool,
    rng: &mut Rng,
) -> Result<(Var, f64, usize)> {
    if batch.is_empty() {
        return Err(Error::usage("empty batch"));
    }
    let sources: Vec<&[usize]> = batch.iter().map(|e| e.source.as_slice()).collect();
    let targets: Vec<&[usize]> = batch.iter().map(|e| e.target.as_slice()).collect();
    let weights: Vec<Vec<f64>> = batch
        .iter()
        .map(|e| e.mask.iter().map(|&m| if m { 1.0 } else { 0.0 }).collect())
        .collect();
    let scales = batch_scales(batch);
    let total = weighted_log_likelihood(
        model,
        g,
        &sources,
        scales.as_deref(),
        &targets,
        &weights,
        None,
        training,
        rng,
    )?;
    let nll = -g.value(total).item().f64();
    let tokens = batch.iter().map(|e| e.mask.iter().filter(|&&m| m).count()).sum();
    let loss = g.scale(total, T::of(-1.0 / batch.len() as f64))?;
    Ok((loss, nll, tokens))
}

/// Summed NLL and counted tokens, computed in double precision from the
/// model's logits.
fn nll_f64(logits: &Tensor<f32>, targets: &[&[usize]], weights: &[Vec<f64>]) -> (f64, usize) {
    let b = targets.len();
    let logp = log_softmax(&logits.cast::<f64>());
    let mut nll = 0.0;
    let mut count = 0;
    for (r, (t, w)) in targets.iter().zip(weights).enumerate() {
        for (step, &id) in t.iter().enumerate() {
            if w[step] > 0.0 {
                nll -= w[step] * logp.at(step * b + r, id);
                count += 1;
            }
        }
    }
    (nll, count)
}

/// `exp(total NLL / counted tokens)` over encoded examples, excluding
/// loss-masked target positions.
pub fn example_perplexity(model: &Seq2seq, examples: &[TrainExample]) -> Result<f64> {
    if examples.is_empty() {
        return Err(Error::usage("perplexity of an empty dataset"));
    }
    let mut nll = 0.0;
    let mut count = 0;
    let mut rng = Rng::seed(0);
    for chunk in examples.chunks(EVAL_CHUNK) {
        let batch: Vec<&TrainExample> = chunk.iter().collect();
        let sources: Vec<&[usize]> = batch.iter().map(|e| e.source.as_slice()).collect();
        let targets: Vec<&[usize]> = batch.iter().map(|e| e.target.as_slice()).collect();
        let weights: Vec<Vec<f64>> = batch
            .iter()
            .map(|e| e.mask.iter().map(|&m| if m { 1.0 } else { 0.0 }).collect())
            .collect();
        let scales = batch_scales(&batch);
        let mut g = Graph::new(&model.params);
        let logits = seq2seq_logits(model, &mut g, &sources, scales.as_deref(), &targets, false, &mut rng)?;
        let (n, c) = nll_f64(g.value(logits), &targets, &weights);
        nll += n;
        count += c;
    }
    if count == 0 {
        return Err(Error::Undefined("perplexity with no counted tokens".into()));
    }
    Ok((nll / count as f64).exp())
}

pub fn perplexity(model: &Seq2seq, triples: &[DialogueTriple], scope: PerplexityScope) -> Result<f64> {
    let mask = TokenMask::new(&model.vocab, &model.config.profanity);
    let examples = make_examples(
        triples,
        &model.vocab,
        model.config.max_len,
        &mask,
        scope == PerplexityScope::AllTurns,
    )?;
    example_perplexity(model, &examples)
}

/// Word error rate of greedy responses against the references. Reference
/// tokens excluded from training (UNK, profanity) are dropped first.
pub fn wer(model: &Seq2seq, triples: &[DialogueTriple], scope: PerplexityScope) -> Result<f64> {
    let mask = TokenMask::new(&model.vocab, &model.config.profanity);
    let examples = make_examples(
        triples,
        &model.vocab,
        model.config.max_len,
        &mask,
        scope == PerplexityScope::AllTurns,
    )?;
    let sources: Vec<&[usize]> = examples.iter().map(|e| e.source.as_slice()).collect();
    let hyps = decode(
        model,
        &sources,
        None,
        DecodeMode::Greedy,
        model.config.max_len,
        &mut Rng::seed(0),
    )?;
    let hyps: Vec<Vec<usize>> = hyps.into_iter().map(|d| d.tokens).collect();
    let refs: Vec<Vec<usize>> = examples
        .iter()
        .map(|e| {
            e.target
                .iter()
                .copied()
                .filter(|&t| t != EOS && !mask.loss_masked(t))
                .collect()
        })
        .collect();
    word_error_rate(&hyps, &refs)
}

/// Plain MLE training.
pub fn train_dialogue(
    model: &mut Seq2seq,
    data: &[TrainExample],
    cfg: &TrainConfig,
    rng: &mut Rng,
) -> Result<TrainLog> {
    train_dialogue_with(model, data, cfg, rng, |_, _, _, _| Ok(None))
}

/// MLE training with an optional extra loss term per batch. `extra` receives
/// the model, the batch graph, the batch and the global step, and may return
/// a scalar added to the batch loss.
pub fn train_dialogue_with<F>(
    model: &mut Seq2seq,
    data: &[TrainExample],
    cfg: &TrainConfig,
    rng: &mut Rng,
    mut extra: F,
) -> Result<TrainLog>
where
    F: for<'g> FnMut(&Seq2seq, &mut Graph<'g, f32>, &[&TrainExample], usize) -> Result<Option<Var>>,
{
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::usage("dialogue training set is empty"));
    }
    let mut adam = AdamState::new(&model.params, cfg.adam());
    let mut order_rng = rng.fork(1);
    let mut dropout_rng = rng.fork(2);
    let frozen = [(model.embedding_id(), PAD)];
    let mut log = TrainLog::default();
    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..data.len()).collect();
        order_rng.shuffle(&mut order);
        let (mut nll, mut tokens) = (0.0, 0usize);
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&TrainExample> = chunk.iter().map(|&i| &data[i]).collect();
            let grads = {
                let m: &Seq2seq = model;
                let mut g = Graph::new(&m.params);
                let (mut loss, n, c) = mle_loss(m, &mut g, &batch, true, &mut dropout_rng)?;
                nll += n;
                tokens += c;
                if let Some(term) = extra(m, &mut g, &batch, log.steps)? {
                    loss = g.add(loss, term)?;
                }
                g.backward(loss)?.into_params()
            };
            apply_update(&mut model.params, &mut adam, grads, cfg.clip, &frozen)?;
            log.steps += 1;
        }
        let mean = if tokens > 0 { nll / tokens as f64 } else { 0.0 };
        log::info!("dialogue epoch {}: nll/token {mean:.4}", epoch + 1);
        log.epoch_losses.push(mean);
    }
    Ok(log)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LmTrainLog {
    pub train_losses: Vec<f64>,
    pub dev_perplexity: Vec<f64>,
    /// Index into `dev_perplexity` of the epoch whose parameters were kept.
    pub best_epoch: usize,
}

struct LmData {
    targets: Vec<Vec<usize>>,
    weights: Vec<Vec<f64>>,
}

impl LmData {
    fn new(model: &LanguageModel, corpus: &[TokenSeq]) -> Self {
        let mask = TokenMask::new(&model.vocab, &model.config.profanity);
        let targets: Vec<Vec<usize>> = corpus
            .iter()
            .filter(|u| !u.is_empty())
            .map(|u| encode_response(&model.vocab, u, model.config.max_len))
            .collect();
        let weights = targets
            .iter()
            .map(|t| {
                t.iter()
                    .map(|&id| if mask.loss_masked(id) { 0.0 } else { 1.0 })
                    .collect()
            })
            .collect();
        LmData { targets, weights }
    }
}

fn lm_data_perplexity(model: &LanguageModel, data: &LmData) -> Result<f64> {
    let mut nll = 0.0;
    let mut count = 0;
    let mut rng = Rng::seed(0);
    for (targets, weights) in data.targets.chunks(EVAL_CHUNK).zip(data.weights.chunks(EVAL_CHUNK)) {
        let refs: Vec<&[usize]> = targets.iter().map(Vec::as_slice).collect();
        let mut g = Graph::new(&model.params);
        let logits = lm_logits(model, &mut g, &refs, false, &mut rng)?;
        let (n, c) = nll_f64(g.value(logits), &refs, weights);
        nll += n;
        count += c;
    }
    if count == 0 {
        return Err(Error::Undefined("perplexity with no counted tokens".into()));
    }
    Ok((nll / count as f64).exp())
}

pub fn lm_perplexity(model: &LanguageModel, corpus: &[TokenSeq]) -> Result<f64> {
    let data = LmData::new(model, corpus);
    if data.targets.is_empty() {
        return Err(Error::usage("perplexity of an empty corpus"));
    }
    lm_data_perplexity(model, &data)
}

/// Trains a language model on `corpus`, holding out a tenth (at least one
/// utterance, or the whole corpus when it has fewer than ten) as a dev set.
/// Training stops after `patience` epochs without dev improvement and the
/// best parameters are kept.
pub fn train_lm(
    corpus: &[TokenSeq],
    vocab: Vocab,
    config: super::LmConfig,
    cfg: &TrainConfig,
    embeddings: Option<Tensor>,
    rng: &mut Rng,
) -> Result<(LanguageModel, LmTrainLog)> {
    cfg.validate()?;
    let mut model = LanguageModel::new(config, vocab, embeddings, &mut rng.fork(0))?;
    let all = LmData::new(&model, corpus);
    if all.targets.is_empty() {
        return Err(Error::usage("language model corpus is empty"));
    }
    let mut order: Vec<usize> = (0..all.targets.len()).collect();
    rng.fork(3).shuffle(&mut order);
    let (train_idx, dev_idx) = if order.len() < 10 {
        (order.clone(), order)
    } else {
        let n_dev = order.len().div_ceil(10);
        (order[n_dev..].to_vec(), order[..n_dev].to_vec())
    };
    let pick = |idx: &[usize]| LmData {
        targets: idx.iter().map(|&i| all.targets[i].clone()).collect(),
        weights: idx.iter().map(|&i| all.weights[i].clone()).collect(),
    };
    let (train, dev) = (pick(&train_idx), pick(&dev_idx));

    let mut adam = AdamState::new(&model.params, cfg.adam());
    let mut order_rng = rng.fork(1);
    let mut dropout_rng = rng.fork(2);
    let frozen = [(model.embedding_id(), PAD)];
    let mut log = LmTrainLog::default();
    let mut best = (f64::INFINITY, model.params.clone());
    let mut stale = 0;
    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..train.targets.len()).collect();
        order_rng.shuffle(&mut order);
        let (mut nll, mut tokens) = (0.0, 0.0);
        for chunk in order.chunks(cfg.batch_size) {
            let targets: Vec<&[usize]> = chunk.iter().map(|&i| train.targets[i].as_slice()).collect();
            let weights: Vec<Vec<f64>> = chunk.iter().map(|&i| train.weights[i].clone()).collect();
            let grads = {
                let mut g = Graph::new(&model.params);
                let logits = lm_logits(&model, &mut g, &targets, true, &mut dropout_rng)?;
                let total = weighted_sum(&mut g, logits, &targets, &weights, None)?;
                nll -= g.value(total).item() as f64;
                tokens += weights.iter().flatten().sum::<f64>();
                let loss = g.scale(total, -1.0 / chunk.len() as f32)?;
                g.backward(loss)?.into_params()
            };
            apply_update(&mut model.params, &mut adam, grads, cfg.clip, &frozen)?;
        }
        log.train_losses.push(if tokens > 0.0 { nll / tokens } else { 0.0 });
        let dev_ppl = lm_data_perplexity(&model, &dev)?;
        log::info!("lm epoch {}: dev perplexity {dev_ppl:.3}", epoch + 1);
        log.dev_perplexity.push(dev_ppl);
        if dev_ppl < best.0 {
            best = (dev_ppl, model.params.clone());
            log.best_epoch = epoch;
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience.max(1) {
                break;
            }
        }
    }
    model.params = best.1;
    Ok((model, log))
}

#[cfg(test)]
pub(crate) fn seq2seq_logits_for_tests<T: Float>(
    model: &Seq2seq,
    g: &mut Graph<'_, T>,
    sources: &[&[usize]],
    targets: &[&[usize]],
) -> Result<Var> {
    seq2seq_logits(model, g, sources, None, targets, false, &mut Rng::seed(0))
}
