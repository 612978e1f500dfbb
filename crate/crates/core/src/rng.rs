//! Deterministic seed derivation.
//!
//! Every stochastic stage (corpus split, each sampler chain, each fold-in,
//! each Mantel run) owns a generator seeded through [`derive_seed`] from its
//! parent seed and a stable label, so runs reproduce bit-for-bit regardless
//! of execution order or thread scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const FNV_OFFSET: u64 = 0xcbf29ce484222325;
const FNV_PRIME: u64 = 0x100000001b3;

fn splitmix64(seed: u64) -> u64 {
    let mut z = seed.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Derive a child seed from a parent seed and a label.
///
/// FNV-1a over the parent bytes and the label, finished with a splitmix64
/// scramble so nearby labels land far apart.
pub fn derive_seed(parent: u64, label: &str) -> u64 {
    let mut h = FNV_OFFSET;
    for b in parent.to_le_bytes() {
        h = (h ^ u64::from(b)).wrapping_mul(FNV_PRIME);
    }
    for &b in label.as_bytes() {
        h = (h ^ u64::from(b)).wrapping_mul(FNV_PRIME);
    }
    splitmix64(h)
}

/// The generator used throughout the crate.
pub fn rng_from(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
