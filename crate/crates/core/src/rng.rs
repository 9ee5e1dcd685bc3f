//! Seeded pseudo-random numbers with a fixed, platform-independent recurrence.
//!
//! The generator is xorshift64* seeded through one SplitMix64 step:
//!
//! ```text
//! seed:  z = seed + 0x9E3779B97F4A7C15
//!        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
//!        z = (z ^ (z >> 27)) * 0x94D049BB133111EB
//!        state = z ^ (z >> 31)            (0 is replaced by 0x9E3779B97F4A7C15)
//! next:  x ^= x >> 12;  x ^= x << 25;  x ^= x >> 27;  state = x
//!        output = x * 0x2545F4914F6CDD1D
//! ```
//!
//! All arithmetic wraps modulo 2^64. An integer below `n` is
//! `(next * n) >> 64` computed in 128 bits; a unit float takes the top 24
//! (`f32`) or 53 (`f64`) bits of `next`.
//!
//! Shuffling is Fisher–Yates from the back: for `i` from `len - 1` down to
//! `1`, swap item `i` with item `below(i + 1)`.

use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rng {
    seed: u64,
    state: u64,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        let mut z = seed.wrapping_add(GOLDEN);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^= z >> 31;
        Self {
            seed,
            state: if z == 0 { GOLDEN } else { z },
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn next_u64(&mut self) -> u64 {
        let mut x = self.state;
        x ^= x >> 12;
        x ^= x << 25;
        x ^= x >> 27;
        self.state = x;
        x.wrapping_mul(0x2545_F491_4F6C_DD1D)
    }

    /// Uniform integer in `0..n`. `n` must be positive.
    pub fn below(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        ((self.next_u64() as u128 * n as u128) >> 64) as usize
    }

    /// Uniform in `[0, 1)` with 53 random bits.
    pub fn unit_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `[0, 1)` with 24 random bits.
    pub fn unit_f32(&mut self) -> f32 {
        (self.next_u64() >> 40) as f32 * (1.0 / (1u32 << 24) as f32)
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }

    /// He-uniform initialisation: samples in `[-b, b]`, `b = sqrt(6 / fan_in)`.
    pub fn init_weights<T: Real>(&mut self, shape: &[usize], fan_in: usize) -> Result<Tensor<T>> {
        if fan_in == 0 {
            return Err(Error::InvalidArgument("fan_in must be at least 1".into()));
        }
        let bound = (6.0 / fan_in as f64).sqrt();
        let len: usize = shape.iter().product();
        let data = (0..len)
            .map(|_| T::of((2.0 * self.unit_f64() - 1.0) * bound))
            .collect();
        Tensor::from_vec(shape, data)
    }
}

/// Returns a shuffled copy of `items`, leaving the input untouched.
pub fn shuffled<T: Clone>(rng: &mut Rng, items: &[T]) -> Vec<T> {
    let mut out = items.to_vec();
    rng.shuffle(&mut out);
    out
}
