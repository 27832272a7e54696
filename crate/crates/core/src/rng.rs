//! Labelled deterministic random streams.
//!
//! A stream is keyed by `(master_seed, label)`. The key is hashed with
//! SHA-256 into a ChaCha20 seed, so the sequence depends only on those two
//! values and is identical on every platform.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use sha2::{Digest, Sha256};

#[derive(Debug, Clone)]
pub struct RngStream {
    master_seed: u64,
    label: String,
    counter: u64,
    rng: ChaCha20Rng,
}

impl RngStream {
    pub fn new(master_seed: u64, label: &str) -> Self {
        let mut hasher = Sha256::new();
        hasher.update(master_seed.to_le_bytes());
        hasher.update(label.as_bytes());
        let digest = hasher.finalize();
        let mut seed = [0u8; 32];
        seed.copy_from_slice(&digest);
        Self { master_seed, label: label.to_owned(), counter: 0, rng: ChaCha20Rng::from_seed(seed) }
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// Number of variates drawn so far.
    pub fn counter(&self) -> u64 {
        self.counter
    }

    /// Child stream with the label `"{label}/{suffix}"`.
    pub fn derive(&self, suffix: &str) -> Self {
        Self::new(self.master_seed, &format!("{}/{}", self.label, suffix))
    }

    pub fn standard_normal(&mut self) -> f64 {
        self.counter += 1;
        self.rng.sample(StandardNormal)
    }

    /// Uniform in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.counter += 1;
        self.rng.random::<f64>()
    }

    pub fn next_u64(&mut self) -> u64 {
        self.counter += 1;
        self.rng.next_u64()
    }
}
