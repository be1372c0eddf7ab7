//! Seed derivation for independent random streams.
//!
//! Every randomized stage draws from a generator keyed by
//! `(master seed, stage tag, index)`, so adding or reordering stages never
//! perturbs the streams of the others, and results do not depend on which
//! worker thread ran which arm.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Generator used throughout the crate. ChaCha output is specified
/// independently of platform and `rand` version.
pub type Rng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes a master seed, a stage tag and an index into a child seed.
pub fn derive(master: u64, tag: &str, index: u64) -> u64 {
    // FNV-1a over the tag bytes
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in tag.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    splitmix64(splitmix64(master ^ splitmix64(h)) ^ splitmix64(index.wrapping_add(0x5bd1_e995)))
}

pub fn rng(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn derived_rng(master: u64, tag: &str, index: u64) -> Rng {
    rng(derive(master, tag, index))
}
