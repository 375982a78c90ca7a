//! Seeded random streams.
//!
//! Every stream is a xoshiro256++ generator seeded through SplitMix64
//! (`Xoshiro256PlusPlus::seed_from_u64`). Trial streams are keyed by
//! `(base_seed, rep_index, role)`: the three fields are packed into one
//! 64-bit word
//!
//! ```text
//! word = base_seed << 32 | (rep_index & 0xFF_FFFF) << 8 | role
//! ```
//!
//! and passed through the SplitMix64 finalizer, which is a bijection on
//! `u64`. Distinct keys (with `rep_index < 2^24`) therefore give distinct
//! seeds.
//!
//! Uniform deviates take the top 53 bits of a raw output and scale by
//! `2^-53`. Gaussian deviates use Box–Muller on consecutive uniform pairs,
//! returning the cosine branch first and the sine branch on the next call.

use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 output function applied to `z + golden gamma`.
pub fn splitmix64(z: u64) -> u64 {
    let mut z = z.wrapping_add(GOLDEN_GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Purpose of a stream inside one trial. Roles keep draws for different
/// quantities independent of each other.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum StreamRole {
    Cost = 0,
    Signal = 1,
    NoiseA = 2,
    NoiseB = 3,
    Direction = 4,
    Pilot = 5,
    Check = 6,
    Permutation = 7,
}

pub const MAX_REP_INDEX: u32 = 1 << 24;

/// Packs `(base_seed, rep_index, role)` and mixes it into a stream seed.
pub fn derive_trial_seed(base_seed: u32, rep_index: u32, role: StreamRole) -> u64 {
    assert!(rep_index < MAX_REP_INDEX, "rep_index must be below 2^24");
    let word = (u64::from(base_seed) << 32) | (u64::from(rep_index) << 8) | role as u64;
    splitmix64(word)
}

pub fn derive_trial_stream(base_seed: u32, rep_index: u32, role: StreamRole) -> TrialRng {
    TrialRng::from_seed(derive_trial_seed(base_seed, rep_index, role))
}

#[derive(Clone, Debug)]
pub struct TrialRng {
    inner: Xoshiro256PlusPlus,
    spare: Option<f64>,
}

impl TrialRng {
    pub fn from_seed(seed: u64) -> Self {
        TrialRng {
            inner: Xoshiro256PlusPlus::seed_from_u64(seed),
            spare: None,
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform on `[0, 1)` with 53 random bits.
    pub fn uniform(&mut self) -> f64 {
        (self.inner.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Standard normal deviate (Box–Muller).
    pub fn gaussian(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        // 1 - u lies in (0, 1], so the log is finite.
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = std::f64::consts::TAU * u2;
        self.spare = Some(r * theta.sin());
        r * theta.cos()
    }

    pub fn gaussian_vec(&mut self, n: usize, std_dev: f64) -> Vec<f64> {
        (0..n).map(|_| std_dev * self.gaussian()).collect()
    }

    /// Uniform index in `0..bound` by rejection on the raw 64-bit output.
    pub fn below(&mut self, bound: usize) -> usize {
        assert!(bound > 0);
        let bound = bound as u64;
        let zone = u64::MAX - (u64::MAX % bound);
        loop {
            let v = self.inner.next_u64();
            if v < zone {
                return (v % bound) as usize;
            }
        }
    }

    /// Fisher–Yates permutation of `0..n`.
    pub fn permutation(&mut self, n: usize) -> Vec<usize> {
        let mut p: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            let j = self.below(i + 1);
            p.swap(i, j);
        }
        p
    }
}
