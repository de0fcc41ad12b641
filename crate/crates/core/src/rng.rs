//! Seed handling. Every random choice in the workbench flows from one
//! top-level `u64` seed; subsystems derive children with `split_seed` so runs
//! are reproducible and independent of evaluation order.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Derive a child seed. `tag` identifies the consumer (depth index, phase
/// number, instance number, ...); the same (seed, tag) always yields the same
/// child. SplitMix64 finalizer over the xor keeps children well separated.
pub fn split_seed(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// The workbench's stream RNG: counter-based, stable across platforms.
pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
