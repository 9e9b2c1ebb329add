// SPDX-License-Identifier: MIT OR Apache-2.0

//! Seed derivation.
//!
//! Every stochastic step takes an explicit seed. Sub-seeds are derived by
//! hashing `(parent, tag)` so that adding a new consumer never shifts the
//! stream seen by an existing one.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Deterministic generator used throughout the crate.
pub type Rng = ChaCha8Rng;

/// Build the crate's generator from a 64-bit seed.
pub fn seeded(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive a child seed from a parent seed and a numeric tag.
pub fn derive(parent: u64, tag: u64) -> u64 {
    splitmix(splitmix(parent) ^ tag.rotate_left(17))
}

/// Derive a child seed from a parent seed and a string tag.
pub fn derive_str(parent: u64, tag: &str) -> u64 {
    // FNV-1a over the tag bytes
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in tag.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    derive(parent, h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng as _;

    #[test]
    fn derived_seeds_are_stable_and_distinct() {
        assert_eq!(derive(7, 1), derive(7, 1));
        assert_ne!(derive(7, 1), derive(7, 2));
        assert_ne!(derive_str(7, "greedy"), derive_str(7, "mask"));
        let a: u64 = seeded(3).gen();
        let b: u64 = seeded(3).gen();
        assert_eq!(a, b);
    }
}
