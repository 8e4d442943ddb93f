//! Seed derivation. Every random choice in the swarm draws from a stream keyed by
//! a base seed plus a path of integers (round, question index, purpose tag, ...), so
//! runs are reproducible and no RNG is shared between components.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes `base` with each element of `path` in order.
pub fn derive(base: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(base), |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

pub fn rng(base: u64, path: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(base, path))
}

/// Stable 64-bit hash of a string (FNV-1a); used to key streams by node id.
pub fn hash_str(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01B3)
    })
}

/// Purpose tags keep streams derived from the same base seed disjoint.
pub mod tag {
    pub const BATCH: u64 = 1;
    pub const COMPLETIONS: u64 = 2;
    pub const ASSEMBLE: u64 = 3;
    pub const INIT: u64 = 4;
    pub const PRIMING: u64 = 5;
    pub const JUDGE: u64 = 6;
    pub const NODE: u64 = 7;
}
