//! Seeded random source shared by the splitter, fold builder and cohort generator.
//!
//! The generator is ChaCha8 (`rand_chacha`), seeded with `seed_from_u64` and
//! then switched to a purpose-specific stream. Derived draws are defined here
//! rather than through `rand` so that other implementations can reproduce
//! fixtures from the description below:
//!
//! * uniform in [0, 1): top 53 bits of `next_u64` times 2^-53
//! * integer below `n`: high word of the 128-bit product `next_u64 * n`
//! * standard normal: Box-Muller, `sqrt(-2 ln(1 - u1)) * cos(2 pi u2)`, one
//!   value per pair of uniforms (the sine branch is discarded)

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

pub const GENERATOR_ID: &str = "chacha8/seed_from_u64/stream; uniform53; mulhi-below; box-muller-cos";

/// Stream tags keep unrelated consumers of one seed independent.
#[derive(Debug, Clone, Copy)]
pub enum Stream {
    Holdout = 1,
    Folds = 2,
    Cohort = 3,
    Corruption = 4,
}

pub struct SeededRng {
    inner: ChaCha8Rng,
}

impl SeededRng {
    pub fn new(seed: u64, stream: Stream, sub: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(((stream as u64) << 32) | sub);
        SeededRng { inner }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn below(&mut self, n: usize) -> usize {
        ((self.next_u64() as u128 * n as u128) >> 64) as usize
    }

    pub fn standard_normal(&mut self) -> f64 {
        let u1 = self.uniform();
        let u2 = self.uniform();
        (-2.0 * (1.0 - u1).ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// Fisher-Yates, walking from the back.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }
}
