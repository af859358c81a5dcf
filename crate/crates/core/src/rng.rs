//! Deterministic random number streams.
//!
//! A [`RngStream`] is a seeded ChaCha8 generator with cheap derivation of
//! independent substreams by label (and optional index). Substreams keep one
//! consumer's draws from shifting another's: adding a new noise consumer to a
//! training loop does not change the values any existing consumer sees.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::scalar::Scalar;
use crate::tensor::Tensor;

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a(label: &str) -> u64 {
    let mut h: u64 = 0xCBF2_9CE4_8422_2325;
    for b in label.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    h
}

/// Seeded random stream with deterministic substream derivation.
pub struct RngStream {
    seed: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Derive an independent stream for a named purpose.
    pub fn substream(&self, label: &str) -> RngStream {
        RngStream::new(splitmix64(self.seed ^ fnv1a(label)))
    }

    /// Derive an independent stream for a named purpose and index
    /// (per-window, per-epoch, ...).
    pub fn substream_indexed(&self, label: &str, index: u64) -> RngStream {
        RngStream::new(splitmix64(
            self.seed ^ fnv1a(label) ^ index.wrapping_mul(0xA24B_AED4_963E_E407),
        ))
    }

    /// One standard normal draw. Sampling happens in f64 so f32 and f64
    /// pipelines see the same underlying noise sequence.
    pub fn normal<F: Scalar>(&mut self) -> F {
        let v: f64 = self.rng.sample(StandardNormal);
        F::from_f64(v)
    }

    pub fn normal_tensor<F: Scalar>(&mut self, shape: &[usize]) -> Tensor<F> {
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| self.normal::<F>()).collect();
        Tensor::new(shape.to_vec(), data).expect("shape/data consistent by construction")
    }

    /// Uniform draw in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.rng.gen::<f64>()
    }

    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Uniform integer in `0..n`.
    pub fn below(&mut self, n: usize) -> usize {
        self.rng.gen_range(0..n)
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, xs: &mut [T]) {
        for i in (1..xs.len()).rev() {
            let j = self.below(i + 1);
            xs.swap(i, j);
        }
    }
}

/// I.i.d. standard normal tensor of the given shape.
pub fn sample_gaussian<F: Scalar>(rng: &mut RngStream, shape: &[usize]) -> Tensor<F> {
    rng.normal_tensor(shape)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_sequence() {
        let mut a = RngStream::new(42);
        let first: Tensor<f64> = a.normal_tensor(&[8]);
        let second: Tensor<f64> = a.normal_tensor(&[8]);
        assert_ne!(first, second, "consecutive draws must differ");

        let mut b = RngStream::new(42);
        let first_b: Tensor<f64> = b.normal_tensor(&[8]);
        let second_b: Tensor<f64> = b.normal_tensor(&[8]);
        assert_eq!(first, first_b);
        assert_eq!(second, second_b);
    }

    #[test]
    fn substreams_do_not_interfere() {
        let base = RngStream::new(7);
        let mut s1 = base.substream("noise");
        let x1: Tensor<f64> = s1.normal_tensor(&[4]);

        // Consuming from another substream must not shift "noise".
        let mut s2 = base.substream("init");
        let _ = s2.normal_tensor::<f64>(&[100]);
        let mut s1_again = base.substream("noise");
        let x1_again: Tensor<f64> = s1_again.normal_tensor(&[4]);
        assert_eq!(x1, x1_again);

        let mut i0 = base.substream_indexed("win", 0);
        let mut i1 = base.substream_indexed("win", 1);
        assert_ne!(i0.normal_tensor::<f64>(&[4]), i1.normal_tensor::<f64>(&[4]));
    }

    #[test]
    fn empty_shape_gives_empty_tensor() {
        let mut r = RngStream::new(1);
        let t: Tensor<f32> = sample_gaussian(&mut r, &[0]);
        assert!(t.is_empty());
    }

    #[test]
    fn moments_of_a_large_sample() {
        let mut r = RngStream::new(123);
        let t: Tensor<f64> = sample_gaussian(&mut r, &[1_000_000]);
        let n = t.len() as f64;
        let mean = t.data().iter().sum::<f64>() / n;
        let var = t.data().iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
        assert!(mean.abs() < 0.01, "sample mean {mean}");
        assert!((var - 1.0).abs() < 0.01, "sample variance {var}");
    }
}
