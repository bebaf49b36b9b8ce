//! Seeded randomness.
//!
//! Every stochastic component draws from [`Rng`], a ChaCha8 stream cipher
//! generator. Seeds are plain `u64`s expanded with `SeedableRng::seed_from_u64`
//! so a seed recorded in a result file reproduces the exact stream. Gaussian
//! draws use `rand_distr::StandardNormal` (ziggurat); a port to another
//! language should match the distribution, not the bits.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type Rng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Derives an independent child seed from `(master, tag, index)`.
///
/// The child is the first eight bytes (little endian) of
/// `SHA-256(master_le || tag_utf8 || 0x00 || index_le)`. Adding new tags never
/// perturbs the seeds of existing ones.
pub fn derive_seed(master: u64, tag: &str, index: u64) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(master.to_le_bytes());
    hasher.update(tag.as_bytes());
    hasher.update([0u8]);
    hasher.update(index.to_le_bytes());
    let digest = hasher.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}
