//! Central finite-difference gradient oracle.
//!
//! The oracle only evaluates the forward loss; it never touches the tape's
//! backward pass, so it can independently check any analytic gradient.

use super::graph::{Grads, ParamStore};
use super::tensor::{Float, Tensor};
use crate::error::Result;

/// Central differences of `loss` with respect to every parameter scalar.
pub fn numeric_grads<T: Float>(
    store: &ParamStore<T>,
    eps: f64,
    mut loss: impl FnMut(&ParamStore<T>) -> Result<f64>,
) -> Result<Vec<Tensor<T>>> {
    let mut work = store.clone();
    let mut out = Vec::with_capacity(store.len());
    for id in store.ids() {
        let n = store.get(id).numel();
        let mut grad = Tensor::zeros(store.get(id).shape());
        for j in 0..n {
            let orig = work.get(id).data()[j];
            work.get_mut(id).data_mut()[j] = T::of(orig.f64() + eps);
            let plus = loss(&work)?;
            work.get_mut(id).data_mut()[j] = T::of(orig.f64() - eps);
            let minus = loss(&work)?;
            work.get_mut(id).data_mut()[j] = orig;
            grad.data_mut()[j] = T::of((plus - minus) / (2.0 * eps));
        }
        out.push(grad);
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct GradReport {
    pub max_rel_error: f64,
    pub worst: Option<(String, usize)>,
    pub checked: usize,
    pub skipped: usize,
}

/// Per-coordinate relative error `|a - n| / max(|a|, |n|)` over coordinates
/// where either magnitude exceeds `threshold`.
pub fn compare<A: Float, N: Float>(
    store: &ParamStore<A>,
    analytic: &Grads<A>,
    numeric: &[Tensor<N>],
    threshold: f64,
) -> GradReport {
    let mut report = GradReport {
        max_rel_error: 0.0,
        worst: None,
        checked: 0,
        skipped: 0,
    };
    for (id, num) in store.ids().zip(numeric) {
        let zeros;
        let ana = match analytic.get(id) {
            Some(g) => g,
            None => {
                zeros = Tensor::zeros(num.shape());
                &zeros
            }
        };
        for (j, (&a, &n)) in ana.data().iter().zip(num.data()).enumerate() {
            let (a, n) = (a.f64(), n.f64());
            let scale = a.abs().max(n.abs());
            if scale <= threshold {
                report.skipped += 1;
                continue;
            }
            report.checked += 1;
            let rel = (a - n).abs() / scale;
            if rel > report.max_rel_error {
                report.max_rel_error = rel;
                report.worst = Some((store.name(id).to_string(), j));
            }
        }
    }
    report
}
