//! Seeded, stream-splittable pseudo-randomness.
//!
//! The generator is ChaCha12 (via `rand_chacha`), which is stable across
//! library versions, so identical seeds give bit-identical draw sequences
//! forever. Purpose-specific child streams are derived from
//! `(parent seed, label)` as
//!
//! ```text
//! child_seed = splitmix64(parent_seed ^ fnv1a64(label))
//! ```
//!
//! Distinct (seed, label) pairs map to distinct ChaCha keys, whose outputs do
//! not overlap for far more than 2^64 draws. Floats are derived from the raw
//! 64-bit output by fixed rules (see the individual methods), never through
//! distribution code that might change underneath us.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::error::{Error, Result};
use crate::scalar::Real;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h = FNV_OFFSET;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// A deterministic ChaCha12 stream with labelled sub-stream derivation.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    rng: ChaCha12Rng,
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            rng: ChaCha12Rng::seed_from_u64(seed),
        }
    }

    /// Seed this stream was created with.
    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Derives an independent child stream from `(self.seed, label)`.
    ///
    /// Derivation depends only on the seed, never on how many draws have been
    /// taken, so call order does not matter. Reusing a label reproduces the
    /// same child stream; callers must pick distinct labels for distinct
    /// purposes.
    pub fn derive(&self, label: &str) -> Self {
        Self::new(splitmix64(self.seed ^ fnv1a64(label.as_bytes())))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    /// Uniform draw in `[0, 1)` with 53 random bits.
    pub fn unit(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform draw in `[lo, hi)`.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.unit()
    }

    /// Uniform draw in `[lo, hi)` in the target scalar type. The draw itself
    /// happens in `f64` so the consumed random bits do not depend on `T`.
    pub fn uniform_real<T: Real>(&mut self, lo: T, hi: T) -> T {
        T::of(self.uniform(lo.to_f64().unwrap(), hi.to_f64().unwrap()))
    }

    /// A pair of independent standard normals via Box-Muller.
    pub fn normal_pair(&mut self) -> (f64, f64) {
        // u1 in (0, 1] so the log is finite.
        let u1 = ((self.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64);
        let u2 = self.unit();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        (r * theta.cos(), r * theta.sin())
    }

    /// Unbiased uniform draw in `0..n` by rejection.
    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0, "below(0)");
        let n = n as u64;
        let zone = u64::MAX - (u64::MAX % n);
        loop {
            let x = self.next_u64();
            if x < zone {
                return (x % n) as usize;
            }
        }
    }

    /// Draws `k` distinct values from `pool` by partial Fisher-Yates shuffle;
    /// every k-subset is equally likely.
    pub fn distinct_from(&mut self, pool: &[usize], k: usize) -> Result<Vec<usize>> {
        if k > pool.len() {
            return Err(Error::InsufficientSamples(format!(
                "requested {} distinct indices from a pool of {}",
                k,
                pool.len()
            )));
        }
        let mut pool = pool.to_vec();
        for j in 0..k {
            let pick = j + self.below(pool.len() - j);
            pool.swap(j, pick);
        }
        pool.truncate(k);
        Ok(pool)
    }

    /// In-place Fisher-Yates shuffle.
    pub fn shuffle(&mut self, items: &mut [usize]) {
        for j in (1..items.len()).rev() {
            let pick = self.below(j + 1);
            items.swap(j, pick);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_seeds_give_identical_sequences() {
        let mut a = RngStream::new(123);
        let mut b = RngStream::new(123);
        for _ in 0..1000 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn derived_streams_differ_from_parent_and_each_other() {
        let parent = RngStream::new(5);
        let mut c1 = parent.derive("split");
        let mut c2 = parent.derive("poison");
        let mut c1_again = parent.derive("split");
        let x1: Vec<u64> = (0..8).map(|_| c1.next_u64()).collect();
        let x2: Vec<u64> = (0..8).map(|_| c2.next_u64()).collect();
        let x1b: Vec<u64> = (0..8).map(|_| c1_again.next_u64()).collect();
        assert_eq!(x1, x1b);
        assert_ne!(x1, x2);
    }

    #[test]
    fn unit_draws_in_range() {
        let mut rng = RngStream::new(9);
        for _ in 0..10_000 {
            let u = rng.unit();
            assert!((0.0..1.0).contains(&u));
        }
    }

    #[test]
    fn below_is_roughly_uniform() {
        let mut rng = RngStream::new(41);
        let mut counts = [0usize; 7];
        for _ in 0..70_000 {
            counts[rng.below(7)] += 1;
        }
        for &c in &counts {
            assert!((9_000..11_000).contains(&c), "count {}", c);
        }
    }

    #[test]
    fn normal_pair_moments() {
        let mut rng = RngStream::new(2024);
        let n = 100_000;
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        for _ in 0..n / 2 {
            let (a, b) = rng.normal_pair();
            sum += a + b;
            sumsq += a * a + b * b;
        }
        let mean = sum / n as f64;
        let var = sumsq / n as f64 - mean * mean;
        assert!(mean.abs() < 0.02, "mean {}", mean);
        assert!((var - 1.0).abs() < 0.03, "var {}", var);
    }
}
