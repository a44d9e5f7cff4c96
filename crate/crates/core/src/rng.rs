//! Seeded pseudo-random numbers with a fixed, documented algorithm.
//!
//! The generator is xoshiro256** (Blackman and Vigna), seeded by expanding a
//! 64-bit seed through SplitMix64 (increment `0x9E3779B97F4A7C15`, mix
//! multipliers `0xBF58476D1CE4E5B9` and `0x94D049BB133111EB`, shifts 30/27/31)
//! into the four state words. Derived draws are defined here so that other
//! implementations can reproduce every seeded artifact:
//!
//! * `uniform()` = `(next_u64() >> 11) * 2^-53`, in `[0, 1)`.
//! * `below(n)` = `next_u64() % n`.
//! * `gaussian()` = `sqrt(-2 ln(1 - u1)) * cos(2 pi u2)` with two fresh
//!   uniforms (Box-Muller, cosine branch only).
//! * `shuffle` is Fisher-Yates from the last index down: for `i = len-1..1`,
//!   swap `i` with `below(i + 1)`.

use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256StarStar;

#[derive(Debug, Clone)]
pub struct SeededRng {
    inner: Xoshiro256StarStar,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        Self {
            inner: Xoshiro256StarStar::seed_from_u64(seed),
        }
    }

    /// Derives an independent stream for a labelled sub-purpose, e.g. one per
    /// task and epoch.
    pub fn derived(seed: u64, stream: &[u64]) -> Self {
        let mut mixed = seed;
        for &s in stream {
            mixed = splitmix64(mixed ^ splitmix64(s));
        }
        Self::new(mixed)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform draw in `[low, high)`.
    pub fn uniform_in(&mut self, low: f64, high: f64) -> f64 {
        low + (high - low) * self.uniform()
    }

    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0, "below(0)");
        (self.next_u64() % n as u64) as usize
    }

    pub fn gaussian(&mut self) -> f64 {
        let u1 = self.uniform();
        let u2 = self.uniform();
        (-2.0 * (1.0 - u1).ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }
}

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
