//! Reproducible random streams.
//!
//! Every stream is ChaCha20 (20 rounds, `rand_chacha` 0.9) keyed by four
//! little-endian 64-bit words `seed ‖ a ‖ b ‖ c`, stream id 0, block counter
//! starting at 0. The words are chosen by the caller to name a substream, so
//! any implementation of ChaCha20 reproduces the same draws.
//!
//! Derived values:
//! - uniform `[0,1)`: `(next_u64 >> 11) · 2⁻⁵³`
//! - standard normal: Box–Muller on `u1 = 1 − uniform`, `u2 = uniform`,
//!   returning `r·cos(2πu2)` then `r·sin(2πu2)` from the same pair.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

/// Substream tags used by the library.
pub mod tag {
    pub const TRIAL: u64 = 0x7472_6961_6c00_0000;
    pub const GRAPH: u64 = 0x6772_6170_6800_0000;
    pub const SIGNAL: u64 = 0x7369_676e_616c_0000;
}

pub struct Stream {
    inner: ChaCha20Rng,
    spare_normal: Option<f64>,
}

impl Stream {
    pub fn new(seed: u64, a: u64, b: u64, c: u64) -> Self {
        let mut key = [0u8; 32];
        for (slot, word) in key.chunks_exact_mut(8).zip([seed, a, b, c]) {
            slot.copy_from_slice(&word.to_le_bytes());
        }
        Self {
            inner: ChaCha20Rng::from_seed(key),
            spare_normal: None,
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform on `[0, 1)` with 53 bits of precision.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform_range(&mut self, low: f64, high: f64) -> f64 {
        low + (high - low) * self.uniform()
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    pub fn standard_normal(&mut self) -> f64 {
        if let Some(z) = self.spare_normal.take() {
            return z;
        }
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        let radius = (-2.0 * u1.ln()).sqrt();
        let angle = std::f64::consts::TAU * u2;
        self.spare_normal = Some(radius * angle.sin());
        radius * angle.cos()
    }
}

/// Seed for trial `index` of a run rooted at `root`; the first word of the
/// `(root, index, TRIAL, 0)` stream.
pub fn derive_seed(root: u64, index: u64) -> u64 {
    Stream::new(root, index, tag::TRIAL, 0).next_u64()
}
