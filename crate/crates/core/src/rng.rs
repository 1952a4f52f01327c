//! Seeded random streams.
//!
//! Every random draw in the crate goes through [`SampleRng`], a thin layer over
//! ChaCha8 (`rand_chacha::ChaCha8Rng::seed_from_u64`). The mappings from raw
//! 64-bit words to floats are spelled out here rather than delegated, so that a
//! dataset can be regenerated bit-for-bit by any implementation of ChaCha8:
//!
//! * uniform on `[0, 1)`: `(next_u64 >> 11) * 2^-53`
//! * uniform on `[a, b)`: `a + (b - a) * u`
//! * standard normal: Box-Muller on two uniforms, `u1` mapped to `(0, 1]`;
//!   both outputs of a pair are used, cosine branch first
//! * index in `0..n`: rejection sampling on `next_u64` (no modulo bias)
//! * shuffle: Fisher-Yates from the back

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

#[derive(Clone, Debug)]
pub struct SampleRng {
    inner: ChaCha8Rng,
    spare_normal: Option<f64>,
}

impl SampleRng {
    pub fn new(seed: u64) -> Self {
        Self {
            inner: ChaCha8Rng::seed_from_u64(seed),
            spare_normal: None,
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    pub fn unit(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform(&mut self, a: f64, b: f64) -> f64 {
        a + (b - a) * self.unit()
    }

    pub fn normal(&mut self) -> f64 {
        if let Some(z) = self.spare_normal.take() {
            return z;
        }
        let u1 = 1.0 - self.unit();
        let u2 = self.unit();
        let radius = (-2.0 * u1.ln()).sqrt();
        let angle = std::f64::consts::TAU * u2;
        self.spare_normal = Some(radius * angle.sin());
        radius * angle.cos()
    }

    pub fn index(&mut self, n: usize) -> usize {
        assert!(n > 0, "index range must be nonempty");
        let n = n as u64;
        let zone = u64::MAX - (u64::MAX % n);
        loop {
            let v = self.next_u64();
            if v < zone {
                return (v % n) as usize;
            }
        }
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.index(i + 1);
            items.swap(i, j);
        }
    }

    /// `k` distinct indices from `0..n` (partial Fisher-Yates over `scratch`).
    pub fn choose_distinct(&mut self, n: usize, k: usize, scratch: &mut Vec<usize>) -> Vec<usize> {
        assert!(k <= n);
        scratch.clear();
        scratch.extend(0..n);
        for i in 0..k {
            let j = i + self.index(n - i);
            scratch.swap(i, j);
        }
        scratch[..k].to_vec()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_stream() {
        let mut a = SampleRng::new(7);
        let mut b = SampleRng::new(7);
        for _ in 0..100 {
            assert_eq!(a.uniform(-2.0, 2.0).to_bits(), b.uniform(-2.0, 2.0).to_bits());
            assert_eq!(a.normal().to_bits(), b.normal().to_bits());
        }
    }

    #[test]
    fn uniform_mean_is_centered() {
        let mut rng = SampleRng::new(1);
        let n = 10_000;
        let mean: f64 = (0..n).map(|_| rng.uniform(-2.0, 2.0)).sum::<f64>() / n as f64;
        assert!(mean.abs() <= 0.05, "mean {mean}");
    }

    #[test]
    fn normal_moments() {
        let mut rng = SampleRng::new(3);
        let n = 200_000;
        let xs: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
        assert!(mean.abs() < 0.01);
        assert!((var - 1.0).abs() < 0.01);
    }

    #[test]
    fn distinct_choice_has_no_repeats() {
        let mut rng = SampleRng::new(11);
        let mut scratch = Vec::new();
        let mut picked = rng.choose_distinct(200, 20, &mut scratch);
        picked.sort_unstable();
        picked.dedup();
        assert_eq!(picked.len(), 20);
        assert!(picked.iter().all(|&i| i < 200));
    }
}
