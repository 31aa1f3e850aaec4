//! Seeded, labelled random streams.
//!
//! Every stream is ChaCha20 (RFC 7539 block function, 64-bit counter, zero
//! nonce) keyed with `SHA-256(seed.to_le_bytes() || label)`. Output words are
//! consumed little-endian, two 32-bit words per `u64`. This makes the sample
//! sequence reproducible from any language with a ChaCha20 and SHA-256
//! implementation.

use rand_chacha::ChaCha20Rng;
use rand_core::{RngCore, SeedableRng};
use sha2::{Digest, Sha256};

/// Name recorded in manifests so other implementations can match streams.
pub const GENERATOR_NAME: &str = "chacha20-sha256-key";

fn stream_key(seed: u64, label: &str) -> [u8; 32] {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(label.as_bytes());
    hasher.finalize().into()
}

/// Derives a child seed from a parent seed and a label.
pub fn derive_seed(seed: u64, label: &str) -> u64 {
    let key = stream_key(seed, label);
    u64::from_le_bytes(key[..8].try_into().expect("8 bytes"))
}

#[derive(Debug, Clone)]
pub struct SeededRng {
    seed: u64,
    label: String,
    inner: ChaCha20Rng,
}

impl SeededRng {
    pub fn new(seed: u64, label: &str) -> Self {
        Self {
            seed,
            label: label.to_owned(),
            inner: ChaCha20Rng::from_seed(stream_key(seed, label)),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// Independent stream for a sub-task, labelled `parent/child`.
    pub fn fork(&self, child: &str) -> SeededRng {
        SeededRng::new(self.seed, &format!("{}/{}", self.label, child))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform in [0, 1) with 53 random bits.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Integer in [0, n). `n` must be positive.
    pub fn below(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        ((self.uniform() * n as f64) as usize).min(n - 1)
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    /// Standard normal via Box-Muller; consumes exactly two uniforms.
    pub fn normal(&mut self) -> f64 {
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }
}
