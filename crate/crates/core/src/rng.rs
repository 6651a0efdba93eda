//! Labelled deterministic random streams.
//!
//! Every consumer of randomness (env lanes, the reset sampler, k-means,
//! network init, ...) draws from its own stream keyed by `(seed, label)`, so
//! toggling one consumer never shifts the sequence seen by another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type Stream = ChaCha8Rng;

pub fn seeded_rng(seed: u64, label: &str) -> Stream {
    let mut hasher = Sha256::new();
    hasher.update(b"isb-lab-stream");
    hasher.update(seed.to_le_bytes());
    hasher.update((label.len() as u64).to_le_bytes());
    hasher.update(label.as_bytes());
    let digest: [u8; 32] = hasher.finalize().into();
    ChaCha8Rng::from_seed(digest)
}
