//! Seeded random streams.
//!
//! Every stochastic component draws from its own [`ChaCha8Rng`], derived from
//! one root seed and a stream name, so adding draws to one stream never shifts
//! another.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use sha2::{Digest, Sha256};

pub type StreamRng = ChaCha8Rng;

/// Root seed that expands into named, independent streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedStreams {
    root: u64,
}

impl SeedStreams {
    pub fn new(root: u64) -> Self {
        Self { root }
    }

    pub fn root(&self) -> u64 {
        self.root
    }

    /// Derived 64-bit seed for a named stream.
    pub fn derive(&self, name: &str) -> u64 {
        let mut hasher = Sha256::new();
        hasher.update(self.root.to_le_bytes());
        hasher.update(name.as_bytes());
        let digest = hasher.finalize();
        let mut bytes = [0u8; 8];
        bytes.copy_from_slice(&digest[..8]);
        u64::from_le_bytes(bytes)
    }

    pub fn stream(&self, name: &str) -> StreamRng {
        StreamRng::seed_from_u64(self.derive(name))
    }
}

pub fn rng_from_seed(seed: u64) -> StreamRng {
    StreamRng::seed_from_u64(seed)
}

pub fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

/// Normal(0, std) truncated to two standard deviations by resampling.
pub fn trunc_normal<R: Rng + ?Sized>(rng: &mut R, std: f64) -> f64 {
    loop {
        let x = normal(rng);
        if x.abs() <= 2.0 {
            return x * std;
        }
    }
}
