//! Seeded random streams.
//!
//! Every stream is a ChaCha8 generator keyed by a 32-byte key. The root key
//! of seed `s` is `SHA-256("subcluster.rng.root" ‖ s as u64 LE)`; a
//! sub-stream for `(purpose, index)` is keyed by
//! `SHA-256(parent key ‖ purpose ‖ 0x00 ‖ index as u64 LE)`. Sub-streams
//! depend only on the parent key, never on how far the parent has been
//! drawn, so concurrent stages can each take their own stream.
//!
//! Draw accounting (`position` counts raw 64-bit words):
//! - `next_u64`, `next_f64`, `uniform`, `below`: 1 word
//! - `gaussian`: 2 words (Box–Muller, the second variate is discarded)
//! - `shuffle` of `n` items: `n - 1` words

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Parameters of a single scalar draw.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Distribution {
    Uniform { low: f64, high: f64 },
    Gaussian { mean: f64, std_dev: f64 },
}

#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    key: [u8; 32],
    position: u64,
    core: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        let mut h = Sha256::new();
        h.update(b"subcluster.rng.root");
        h.update(seed.to_le_bytes());
        Self::from_key(seed, h.finalize().into())
    }

    fn from_key(seed: u64, key: [u8; 32]) -> Self {
        Self {
            seed,
            key,
            position: 0,
            core: ChaCha8Rng::from_seed(key),
        }
    }

    /// Independent stream for `(purpose, index)`, derived from this stream's key.
    pub fn substream(&self, purpose: &str, index: u64) -> RngStream {
        let mut h = Sha256::new();
        h.update(self.key);
        h.update(purpose.as_bytes());
        h.update([0u8]);
        h.update(index.to_le_bytes());
        Self::from_key(self.seed, h.finalize().into())
    }

    /// Seed of the root stream this one descends from.
    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Number of 64-bit words drawn so far.
    pub fn position(&self) -> u64 {
        self.position
    }

    pub fn next_u64(&mut self) -> u64 {
        self.position += 1;
        self.core.next_u64()
    }

    /// Uniform on `[0, 1)` with 53 bits of resolution.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform(&mut self, low: f64, high: f64) -> Result<f64> {
        if !(low.is_finite() && high.is_finite()) || high < low {
            return Err(Error::param(format!("uniform bounds [{low}, {high}]")));
        }
        Ok(low + (high - low) * self.next_f64())
    }

    pub fn gaussian(&mut self, mean: f64, std_dev: f64) -> Result<f64> {
        if !(mean.is_finite() && std_dev.is_finite()) || std_dev < 0.0 {
            return Err(Error::param(format!("gaussian(mean={mean}, std_dev={std_dev})")));
        }
        // 1 - u keeps the log argument in (0, 1].
        let u1 = 1.0 - self.next_f64();
        let u2 = self.next_f64();
        let z = (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos();
        Ok(mean + std_dev * z)
    }

    pub fn draw(&mut self, dist: Distribution) -> Result<f64> {
        match dist {
            Distribution::Uniform { low, high } => self.uniform(low, high),
            Distribution::Gaussian { mean, std_dev } => self.gaussian(mean, std_dev),
        }
    }

    /// Integer in `0..n` by multiply-shift; `n` must be nonzero.
    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0, "below(0)");
        ((self.next_u64() as u128 * n as u128) >> 64) as usize
    }

    /// Fisher–Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }
}

/// Single draw from `dist`; see the module docs for how far it advances `stream`.
pub fn rng_draw(stream: &mut RngStream, dist: Distribution) -> Result<f64> {
    stream.draw(dist)
}
