use super::rng::Rng;
use super::tensor::{Float, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitKind {
    Xavier,
    Zeros,
}

/// Glorot-uniform bound for a `[fan_in, fan_out]` matrix.
pub fn xavier_bound(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

pub fn xavier<T: Float>(shape: &[usize], rng: &mut Rng) -> Result<Tensor<T>> {
    validate(shape)?;
    let (fan_in, fan_out) = if shape.len() == 1 {
        (1, shape[0])
    } else {
        (shape[0], shape[1..].iter().product())
    };
    let bound = xavier_bound(fan_in, fan_out);
    let numel: usize = shape.iter().product();
    let data = (0..numel).map(|_| T::of(rng.uniform_range(-bound, bound))).collect();
    Tensor::new(shape.to_vec(), data)
}

pub fn init<T: Float>(kind: InitKind, shape: &[usize], rng: &mut Rng) -> Result<Tensor<T>> {
    match kind {
        InitKind::Xavier => xavier(shape, rng),
        InitKind::Zeros => {
            validate(shape)?;
            Ok(Tensor::zeros(shape))
        }
    }
}

/// Copy of a pretrained matrix, checked against the expected shape.
pub fn pretrained_copy<T: Float>(source: &Tensor<T>, shape: &[usize]) -> Result<Tensor<T>> {
    if source.shape() != shape {
        return Err(Error::Shape {
            op: "pretrained_copy",
            lhs: source.shape().to_vec(),
            rhs: shape.to_vec(),
        });
    }
    Ok(source.clone())
}

fn validate(shape: &[usize]) -> Result<()> {
    if shape.is_empty() || shape.contains(&0) {
        return Err(Error::usage(format!("invalid shape {shape:?}")));
    }
    Ok(())
}
