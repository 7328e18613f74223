//! Seeded random numbers with a portable, fully specified algorithm.
//!
//! Every stochastic step (initialization, shuffling, dropout, k-means++
//! seeding, synthetic data) draws from [`SeededRng`], so that any run can be
//! replayed from its seeds, including by an implementation in another
//! language:
//!
//! * generator: xoshiro256++ (Blackman & Vigna), state expanded from a `u64`
//!   seed with SplitMix64 (`rand_xoshiro::Xoshiro256PlusPlus::seed_from_u64`);
//! * `uniform()`: `(next_u64 >> 11) * 2^-53`, in `[0, 1)`;
//! * `below(n)`: `floor(uniform() * n)`;
//! * `normal()`: Box–Muller, `sqrt(-2 ln(1 - u1)) * cos(2 pi u2)`, one
//!   variate per pair of uniforms (the sine branch is discarded);
//! * `shuffle`: Fisher–Yates from the last index down, `j = below(i + 1)`.
//!
//! Derived streams use [`derive_seed`], a SplitMix64 finalizer over
//! `seed + 0x9E3779B97F4A7C15 * (stream + 1)`.

use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// Mixes `seed` and a stream index into an independent seed.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed.wrapping_add(GOLDEN_GAMMA.wrapping_mul(stream.wrapping_add(1)));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone)]
pub struct SeededRng {
    inner: Xoshiro256PlusPlus,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        Self {
            inner: Xoshiro256PlusPlus::seed_from_u64(seed),
        }
    }

    /// A generator for sub-stream `stream` of `seed`.
    pub fn stream(seed: u64, stream: u64) -> Self {
        Self::new(derive_seed(seed, stream))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform_range(&mut self, low: f64, high: f64) -> f64 {
        low + (high - low) * self.uniform()
    }

    /// Uniform index in `0..n`. `n` must be positive.
    pub fn below(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        let idx = (self.uniform() * n as f64) as usize;
        idx.min(n - 1)
    }

    pub fn normal(&mut self) -> f64 {
        let u1 = self.uniform();
        let u2 = self.uniform();
        libm::sqrt(-2.0 * libm::log(1.0 - u1)) * libm::cos(2.0 * core::f64::consts::PI * u2)
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }
}
