use serde::{Deserialize, Serialize};

use super::graph::{Grads, ParamStore};
use super::tensor::{Float, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Moment buffers for every parameter of one store.
#[derive(Debug, Clone)]
pub struct AdamState<T = f32> {
    pub config: AdamConfig,
    step: u64,
    first: Vec<Tensor<T>>,
    second: Vec<Tensor<T>>,
}

impl<T: Float> AdamState<T> {
    pub fn new(params: &ParamStore<T>, config: AdamConfig) -> Self {
        let zeros: Vec<Tensor<T>> = params.iter().map(|(_, t)| Tensor::zeros(t.shape())).collect();
        AdamState {
            config,
            step: 0,
            first: zeros.clone(),
            second: zeros,
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// One bias-corrected Adam update. Every parameter must have a gradient.
    pub fn step(&mut self, params: &mut ParamStore<T>, grads: &Grads<T>) -> Result<()> {
        if self.first.len() != params.len() || grads.len() != params.len() {
            return Err(Error::usage("optimizer state does not match parameter store"));
        }
        for id in params.ids() {
            if grads.get(id).is_none() {
                return Err(Error::usage(format!("missing gradient for {}", params.name(id))));
            }
        }
        self.step += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        let bc1 = 1.0 - beta1.powi(self.step as i32);
        let bc2 = 1.0 - beta2.powi(self.step as i32);
        for id in params.ids() {
            let g = grads.get(id).expect("checked above");
            let i = id.index();
            if g.shape() != self.first[i].shape() {
                return Err(Error::Shape {
                    op: "adam",
                    lhs: g.shape().to_vec(),
                    rhs: self.first[i].shape().to_vec(),
                });
            }
            let p = params.get_mut(id).data_mut();
            let m = self.first[i].data_mut();
            let v = self.second[i].data_mut();
            for j in 0..p.len() {
                let gj = g.data()[j].f64();
                let mj = beta1 * m[j].f64() + (1.0 - beta1) * gj;
                let vj = beta2 * v[j].f64() + (1.0 - beta2) * gj * gj;
                m[j] = T::of(mj);
                v[j] = T::of(vj);
                let update = lr * (mj / bc1) / ((vj / bc2).sqrt() + epsilon);
                p[j] = T::of(p[j].f64() - update);
            }
        }
        Ok(())
    }
}

/// Rescales all gradients so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_grad_norm<T: Float>(grads: &mut Grads<T>, max_norm: f64) -> f64 {
    let norm = grads.global_norm();
    if norm > max_norm && norm > 0.0 {
        let factor = T::of(max_norm / norm);
        for g in grads.slots_mut().iter_mut().flatten() {
            g.scale_in_place(factor);
        }
    }
    norm
}
