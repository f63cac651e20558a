use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Bernoulli, Distribution as _, Normal, Uniform};

use super::Tensor;
use crate::error::{Error, Result};

/// Seeded, splittable random stream.
///
/// Backed by ChaCha8 with an explicit stream id, so sub-streams derived with
/// [`RngStream::split`] are independent of how much the parent has been consumed.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream: u64,
    rng: ChaCha8Rng,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Distribution {
    Normal { mean: f64, std: f64 },
    Uniform { lo: f64, hi: f64 },
    Bernoulli { p: f64 },
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        Self::with_stream(seed, 0)
    }

    fn with_stream(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        RngStream { seed, stream, rng }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Derives an independent child stream identified by `key`.
    pub fn split(&self, key: u64) -> RngStream {
        let mixed = (self.stream ^ 0x9E37_79B9_7F4A_7C15)
            .wrapping_mul(0xBF58_476D_1CE4_E5B9)
            .rotate_left(31)
            ^ key.wrapping_add(1).wrapping_mul(0x94D0_49BB_1331_11EB);
        Self::with_stream(self.seed, mixed)
    }

    pub fn next_f64(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.random::<u64>()
    }

    /// Uniform index in `0..n`.
    pub fn index(&mut self, n: usize) -> usize {
        self.rng.random_range(0..n)
    }

    pub fn normal(&mut self, mean: f64, std: f64) -> f64 {
        let n = Normal::new(mean, std).expect("validated std");
        n.sample(&mut self.rng)
    }

    /// Fisher-Yates permutation of `0..n`.
    pub fn permutation(&mut self, n: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            let j = self.rng.random_range(0..=i);
            idx.swap(i, j);
        }
        idx
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.rng.random_range(0..=i);
            items.swap(i, j);
        }
    }

    /// `k` distinct indices from `0..n` in random order.
    pub fn choose_distinct(&mut self, n: usize, k: usize) -> Vec<usize> {
        let mut p = self.permutation(n);
        p.truncate(k.min(n));
        p
    }

    pub fn sample(&mut self, dist: Distribution, shape: &[usize]) -> Result<Tensor> {
        seeded_sample(self, dist, shape)
    }
}

pub fn seeded_sample(rng: &mut RngStream, dist: Distribution, shape: &[usize]) -> Result<Tensor> {
    let n: usize = shape.iter().product();
    let data: Vec<f64> = match dist {
        Distribution::Normal { mean, std } => {
            if !(std >= 0.0) || !mean.is_finite() {
                return Err(Error::InvalidParameter(format!("normal({mean}, {std})")));
            }
            let d = Normal::new(mean, std).map_err(|e| Error::InvalidParameter(e.to_string()))?;
            (0..n).map(|_| d.sample(&mut rng.rng)).collect()
        }
        Distribution::Uniform { lo, hi } => {
            if !(lo <= hi) {
                return Err(Error::InvalidParameter(format!("uniform({lo}, {hi})")));
            }
            if lo == hi {
                vec![lo; n]
            } else {
                let d = Uniform::new(lo, hi).map_err(|e| Error::InvalidParameter(e.to_string()))?;
                (0..n).map(|_| d.sample(&mut rng.rng)).collect()
            }
        }
        Distribution::Bernoulli { p } => {
            let d = Bernoulli::new(p).map_err(|e| Error::InvalidParameter(format!("bernoulli({p}): {e}")))?;
            (0..n)
                .map(|_| if d.sample(&mut rng.rng) { 1.0 } else { 0.0 })
                .collect()
        }
    };
    Tensor::new(shape.to_vec(), data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_std_normal_is_zero() {
        let mut rng = RngStream::new(1);
        let t = rng.sample(Distribution::Normal { mean: 0.0, std: 0.0 }, &[4, 5]).unwrap();
        assert!(t.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn uniform_mean_is_half() {
        let mut rng = RngStream::new(7);
        let t = rng.sample(Distribution::Uniform { lo: 0.0, hi: 1.0 }, &[100_000]).unwrap();
        assert!((t.mean() - 0.5).abs() < 0.01);
    }

    #[test]
    fn same_seed_same_bits() {
        let a = RngStream::new(42).sample(Distribution::Normal { mean: 1.0, std: 2.0 }, &[64]).unwrap();
        let b = RngStream::new(42).sample(Distribution::Normal { mean: 1.0, std: 2.0 }, &[64]).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn normal_variance_within_ten_percent() {
        let mut rng = RngStream::new(3);
        let t = rng.sample(Distribution::Normal { mean: 0.0, std: 1.5 }, &[20_000]).unwrap();
        let m = t.mean();
        let var = t.data().iter().map(|v| (v - m).powi(2)).sum::<f64>() / t.len() as f64;
        assert!((var / 2.25 - 1.0).abs() < 0.1);
    }

    #[test]
    fn split_streams_independent_of_parent_consumption() {
        let parent = RngStream::new(9);
        let mut consumed = parent.clone();
        for _ in 0..100 {
            consumed.next_f64();
        }
        let mut a = parent.split(3);
        let mut b = consumed.split(3);
        assert_eq!(a.next_u64(), b.next_u64());
        let mut c = parent.split(4);
        assert_ne!(parent.split(3).next_u64(), c.next_u64());
    }

    #[test]
    fn invalid_parameters_rejected() {
        let mut rng = RngStream::new(0);
        assert!(rng.sample(Distribution::Normal { mean: 0.0, std: -1.0 }, &[2]).is_err());
        assert!(rng.sample(Distribution::Uniform { lo: 1.0, hi: 0.0 }, &[2]).is_err());
        assert!(rng.sample(Distribution::Bernoulli { p: 1.5 }, &[2]).is_err());
    }
}
