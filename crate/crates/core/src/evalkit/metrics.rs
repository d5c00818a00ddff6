use std::collections::HashMap;
use std::hash::Hash;

use crate::classifier::ClassifierModel;
use crate::error::{Error, Result};

fn ngram_counts<S: Eq + Hash>(tokens: &[S], n: usize) -> HashMap<&[S], usize> {
    let mut counts = HashMap::new();
    if n > 0 && tokens.len() >= n {
        for w in tokens.windows(n) {
            *counts.entry(w).or_insert(0) += 1;
        }
    }
    counts
}

/// Clipped n-gram matches and total hypothesis n-grams of one pair.
fn clipped<S: Eq + Hash>(hyp: &[S], reference: &[S], n: usize) -> (usize, usize) {
    let h = ngram_counts(hyp, n);
    let r = ngram_counts(reference, n);
    let matched = h.iter().map(|(g, &c)| c.min(r.get(g).copied().unwrap_or(0))).sum();
    (matched, hyp.len().saturating_sub(n - 1))
}

fn brevity_penalty(hyp_len: usize, ref_len: usize) -> f64 {
    if hyp_len == 0 {
        0.0
    } else if hyp_len > ref_len {
        1.0
    } else {
        (1.0 - ref_len as f64 / hyp_len as f64).exp()
    }
}

/// Corpus-level BLEU over 1..=`max_n`-grams on a 0-100 scale, one reference
/// per hypothesis, without smoothing: 0 whenever some order has no match.
pub fn corpus_bleu<S: Eq + Hash>(hyps: &[Vec<S>], refs: &[Vec<S>], max_n: usize) -> Result<f64> {
    if hyps.len() != refs.len() {
        return Err(Error::usage(format!(
            "{} hypotheses but {} references",
            hyps.len(),
            refs.len()
        )));
    }
    if max_n == 0 {
        return Err(Error::usage("BLEU order must be at least 1"));
    }
    let mut log_sum = 0.0;
    for n in 1..=max_n {
        let (mut matched, mut total) = (0, 0);
        for (h, r) in hyps.iter().zip(refs) {
            let (m, t) = clipped(h, r, n);
            matched += m;
            total += t;
        }
        if matched == 0 {
            return Ok(0.0);
        }
        log_sum += (matched as f64 / total as f64).ln();
    }
    let hyp_len = hyps.iter().map(Vec::len).sum();
    let ref_len = refs.iter().map(Vec::len).sum();
    Ok(100.0 * brevity_penalty(hyp_len, ref_len) * (log_sum / max_n as f64).exp())
}

pub fn bleu4<S: Eq + Hash>(hyps: &[Vec<S>], refs: &[Vec<S>]) -> Result<f64> {
    corpus_bleu(hyps, refs, 4)
}

/// Sentence-level BLEU with add-one smoothing on orders above 1. Meant for
/// inspecting single responses, not for reporting.
pub fn sentence_bleu_smoothed<S: Eq + Hash>(hyp: &[S], reference: &[S], max_n: usize) -> f64 {
    let mut log_sum = 0.0;
    for n in 1..=max_n.max(1) {
        let (m, t) = clipped(hyp, reference, n);
        let p = if n == 1 {
            if m == 0 {
                return 0.0;
            }
            m as f64 / t as f64
        } else {
            (m + 1) as f64 / (t + 1) as f64
        };
        log_sum += p.ln();
    }
    100.0 * brevity_penalty(hyp.len(), reference.len()) * (log_sum / max_n.max(1) as f64).exp()
}

/// Levenshtein distance over tokens with unit costs.
pub fn edit_distance<S: PartialEq>(a: &[S], b: &[S]) -> usize {
    let mut row: Vec<usize> = (0..=b.len()).collect();
    for (i, x) in a.iter().enumerate() {
        let mut diag = row[0];
        row[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let next = (diag + usize::from(x != y)).min(row[j] + 1).min(row[j + 1] + 1);
            diag = row[j + 1];
            row[j + 1] = next;
        }
    }
    row[b.len()]
}

/// Sum of token edit distances over the sum of reference lengths.
pub fn word_error_rate<S: PartialEq>(hyps: &[Vec<S>], refs: &[Vec<S>]) -> Result<f64> {
    if hyps.len() != refs.len() {
        return Err(Error::usage(format!(
            "{} hypotheses but {} references",
            hyps.len(),
            refs.len()
        )));
    }
    let total: usize = refs.iter().map(Vec::len).sum();
    if total == 0 {
        return Err(Error::Undefined("word error rate with empty references".into()));
    }
    let errors: usize = hyps.iter().zip(refs).map(|(h, r)| edit_distance(h, r)).sum();
    Ok(errors as f64 / total as f64)
}

/// Mean classifier politeness score of tokenized responses.
pub fn mean_politeness<S: AsRef<str>>(classifier: &ClassifierModel, responses: &[Vec<S>]) -> Result<f64> {
    if responses.is_empty() {
        return Err(Error::usage("no responses to score"));
    }
    let scores = classifier.score_batch(responses)?;
    Ok(scores.iter().sum::<f64>() / scores.len() as f64)
}
