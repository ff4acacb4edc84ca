//! Seeded random stream for stochastic arc expressions.
//!
//! ChaCha8 keyed by `SeedableRng::seed_from_u64`, so a seed yields the same
//! stream on every platform. A Bernoulli(p) draw consumes exactly one `u64`
//! `x` and succeeds iff `x < floor(p * 2^64)`; `p >= 1` always succeeds.

use rand_chacha::ChaCha8Rng;
use rand_core::{Rng, SeedableRng};

#[derive(Debug, Clone)]
pub struct SimRng {
    inner: ChaCha8Rng,
    draws: u64,
}

impl SimRng {
    pub fn new(seed: u64) -> Self {
        Self {
            inner: ChaCha8Rng::seed_from_u64(seed),
            draws: 0,
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.draws += 1;
        self.inner.next_u64()
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        let x = self.next_u64();
        if p >= 1.0 {
            true
        } else if p <= 0.0 {
            false
        } else {
            // p * 2^64 < 2^64 here, so the cast does not saturate.
            x < (p * 18_446_744_073_709_551_616.0) as u64
        }
    }

    /// Number of `u64` values drawn so far.
    pub fn draws(&self) -> u64 {
        self.draws
    }
}
