//! Seeded, counter-addressed randomness.
//!
//! Every random draw in the crate is addressed by `(seed, domain, index)`:
//! the ChaCha8 stream selected by `domain` is read at word offset
//! `2 * index`. Per-edge draws therefore do not depend on iteration order
//! and any edge can be regenerated in isolation.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::math;

/// Draw domains. Distinct domains never share stream words.
pub mod domain {
    pub const SAMPLE: u64 = 1;
    pub const PERTURB: u64 = 2;
    pub const SUBSAMPLE: u64 = 3;
    pub const LAPLACE: u64 = 4;
    pub const LABELS: u64 = 5;
    pub const SOLVER: u64 = 6;
}

/// SplitMix64 finalizer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives an independent child seed, e.g. one per trial or per time step.
#[inline]
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    mix64(mix64(seed) ^ mix64(index.wrapping_add(0x632b_e59b_d9b4_e019)))
}

/// Maps 53 high bits of a word into [0, 1).
#[inline]
pub fn unit_f64(word: u64) -> f64 {
    (word >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Indexed uniform stream for one `(seed, domain)` pair.
pub struct IndexedStream {
    rng: ChaCha8Rng,
    next: u64,
}

impl IndexedStream {
    pub fn new(seed: u64, domain: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(domain);
        IndexedStream { rng, next: 0 }
    }

    /// The 64-bit word addressed by `index`.
    pub fn word(&mut self, index: u64) -> u64 {
        if index != self.next {
            self.rng.set_word_pos(u128::from(index) * 2);
        }
        self.next = index + 1;
        self.rng.next_u64()
    }

    /// Uniform in [0, 1) addressed by `index`.
    pub fn uniform(&mut self, index: u64) -> f64 {
        unit_f64(self.word(index))
    }
}

/// Sequential generator for solver restarts and other non-indexed work.
pub fn stream_rng(seed: u64, domain: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(domain);
    rng
}

/// Uniform in [0, 1) from any generator.
#[inline]
pub fn uniform<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    unit_f64(rng.next_u64())
}

/// Standard normal via Box-Muller.
pub fn standard_normal<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    let u1 = 1.0 - uniform(rng);
    let u2 = uniform(rng);
    math::sqrt(-2.0 * math::ln(u1)) * libm::cos(core::f64::consts::TAU * u2)
}

/// Laplace(0, scale) by inverse CDF. `scale` must be positive; callers check.
pub fn laplace<R: RngCore + ?Sized>(rng: &mut R, scale: f64) -> f64 {
    // u in (-1/2, 1/2]; the open end avoids ln(0)
    let u = 0.5 - uniform(rng);
    let mag = -scale * math::ln_1p(-2.0 * u.abs());
    if u < 0.0 {
        -mag
    } else {
        mag
    }
}
