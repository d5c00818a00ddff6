//! Seeded randomness.
//!
//! Every stochastic operation takes an explicit [`Rng`]. The generator is
//! ChaCha8 keyed by the 64-bit seed, so a seed reproduces the same stream on
//! every platform. Independent streams for the same seed are obtained with
//! [`Rng::fork`].

use rand::seq::SliceRandom;
use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::tensor::Float;

#[derive(Debug, Clone)]
pub struct Rng {
    seed: u64,
    inner: ChaCha8Rng,
}

impl Rng {
    pub fn seed(seed: u64) -> Self {
        Rng {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed_value(&self) -> u64 {
        self.seed
    }

    /// A fresh generator on a separate ChaCha stream of the same seed. The
    /// result does not depend on how much of `self` has been consumed.
    pub fn fork(&self, stream: u64) -> Rng {
        let mut inner = ChaCha8Rng::seed_from_u64(self.seed);
        inner.set_stream(stream.wrapping_add(1));
        Rng { seed: self.seed, inner }
    }

    /// Uniform in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    /// Uniform in `[lo, hi)`.
    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Uniform integer in `[0, n)`.
    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0, "below(0)");
        self.inner.random_range(0..n)
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        items.shuffle(&mut self.inner);
    }

    pub fn choose<'a, T>(&mut self, items: &'a [T]) -> &'a T {
        &items[self.below(items.len())]
    }

    /// Draws an index from an unnormalized nonnegative weight vector by
    /// inverse CDF. Zero-weight entries are never returned.
    pub fn categorical<T: Float>(&mut self, weights: &[T]) -> usize {
        let total: f64 = weights.iter().map(|&w| w.f64()).sum();
        let u = self.uniform() * total;
        let mut acc = 0.0;
        let mut last = 0;
        for (i, &w) in weights.iter().enumerate() {
            if w <= T::zero() {
                continue;
            }
            acc += w.f64();
            last = i;
            if u < acc {
                return i;
            }
        }
        last
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_stream() {
        let mut a = Rng::seed(42);
        let mut b = Rng::seed(42);
        for _ in 0..100 {
            assert_eq!(a.uniform().to_bits(), b.uniform().to_bits());
        }
    }

    #[test]
    fn forks_are_independent_of_parent_position() {
        let a = Rng::seed(1);
        let mut b = Rng::seed(1);
        b.uniform();
        let mut fa = a.fork(3);
        let mut fb = b.fork(3);
        assert_eq!(fa.uniform().to_bits(), fb.uniform().to_bits());
        let mut other = a.fork(4);
        let mut fa = a.fork(3);
        assert_ne!(fa.uniform().to_bits(), other.uniform().to_bits());
    }

    #[test]
    fn categorical_skips_zero_weights() {
        let mut rng = Rng::seed(9);
        for _ in 0..1000 {
            let i = rng.categorical(&[0.0f32, 0.3, 0.0, 0.7]);
            assert!(i == 1 || i == 3);
        }
    }
}
