//! Deterministic seeding utilities.
//!
//! One master seed fans out to independent child streams through
//! counter-based mixing, so adding a new consumer of randomness never
//! perturbs the draws of existing ones. All generators are ChaCha8, which is
//! stable across platforms and releases.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer: a full-avalanche 64-bit mix.
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives the `index`-th child seed of `master`.
pub fn child_seed(master: u64, index: u64) -> u64 {
    mix64(master.wrapping_add(mix64(index.wrapping_add(1)).wrapping_mul(0x9e37_79b9_7f4a_7c15)))
}

/// Derives a seed from a base seed, a tag, and a value sequence (for example
/// a placement's VM counts), independent of any process-level hash state.
pub fn derived_seed(base: u64, tag: u64, values: impl IntoIterator<Item = u64>) -> u64 {
    let mut h = mix64(base ^ mix64(tag));
    for v in values {
        h = mix64(h ^ mix64(v));
    }
    h
}

/// Deterministic generator for a seed.
pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
