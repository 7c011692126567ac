//! Named random streams derived from one experiment seed.
//!
//! Each pipeline stage draws from its own stream, keyed by a stable name, so
//! adding a stage never shifts the numbers another stage sees.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub const ENCODER_STREAM: &str = "encoder";
pub const IVF_STREAM: &str = "ivf-kmeans";
pub const PRF_STREAM: &str = "prf-kmeans";

/// 64-bit seed for the stream `name` under the root `seed`.
pub fn stream_seed(seed: u64, name: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(name.as_bytes());
    let digest = hasher.finalize();
    let mut head = [0u8; 8];
    head.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(head)
}

pub fn stream_rng(seed: u64, name: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(stream_seed(seed, name))
}
