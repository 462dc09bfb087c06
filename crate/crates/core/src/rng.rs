//! Deterministic seed derivation.
//!
//! Every training run owns a handful of independent RNG streams (parameter
//! init, batch shuffling, reparameterization noise). Streams are derived from
//! a master seed plus string tags by FNV-1a, so adding or removing a consumer
//! of one stream never perturbs the others, and experiment cells can derive
//! their seeds from (master, task, fold, seed index) without coordination.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// 64-bit FNV-1a over a byte slice.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash = FNV_OFFSET;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(FNV_PRIME);
    }
    hash
}

/// Derive a child seed from a master seed and a list of string parts.
pub fn derive_seed(master: u64, parts: &[&str]) -> u64 {
    let mut hash = FNV_OFFSET;
    for &b in master.to_le_bytes().iter() {
        hash ^= b as u64;
        hash = hash.wrapping_mul(FNV_PRIME);
    }
    for part in parts {
        // Separator byte keeps ("ab","c") distinct from ("a","bc").
        for &b in part.as_bytes().iter().chain(std::iter::once(&0x1f)) {
            hash ^= b as u64;
            hash = hash.wrapping_mul(FNV_PRIME);
        }
    }
    hash
}

/// A named deterministic stream: ChaCha8 seeded from (master, tags).
pub fn stream(master: u64, tags: &[&str]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, tags))
}
