//! Tensors, reverse-mode differentiation, optimization and seeded randomness.

pub mod gradcheck;
mod graph;
mod init;
mod optim;
mod rng;
mod tensor;

pub use graph::{log_softmax, softmax, Gradients, Grads, Graph, ParamId, ParamStore, Var};
pub use init::{init, pretrained_copy, xavier, xavier_bound, InitKind};
pub use optim::{clip_grad_norm, AdamConfig, AdamState};
pub use rng::Rng;
pub use tensor::{Float, Tensor};
