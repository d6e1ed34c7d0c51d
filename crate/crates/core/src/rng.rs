//! Stateless, counter-based randomness.
//!
//! Every random decision in the pipeline is a pure function of a key tuple, so
//! results never depend on evaluation order or thread scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Hashes an ordered key tuple into 64 well-mixed bits.
#[inline]
pub fn hash_key(seed: u64, parts: &[u64]) -> u64 {
    let mut h = mix64(seed.wrapping_add(GOLDEN));
    for &p in parts {
        h = mix64(h ^ p.wrapping_add(GOLDEN).wrapping_add(h << 6));
    }
    h
}

/// Uniform draw in `[0, 1)` for the given key.
#[inline]
pub fn unit_f64(seed: u64, parts: &[u64]) -> f64 {
    (hash_key(seed, parts) >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// A sequential generator for one keyed site (e.g. one packed sequence).
pub fn keyed_rng(seed: u64, parts: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(hash_key(seed, parts))
}
