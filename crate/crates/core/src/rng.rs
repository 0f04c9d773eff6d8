//! Counter-derived random streams.
//!
//! Every draw in a simulation belongs to a stream keyed by
//! `(seed, realization, asset)`. A stream is a fresh Xoshiro256++ generator
//! seeded from a SplitMix64 hash of the key, so realization `j` produces the
//! same numbers whichever thread evaluates it and in whatever order. This is
//! what makes parallel sampling deterministic, lets the estimators regenerate
//! individual rows instead of storing all of them, and gives common random
//! numbers across scenarios that share a seed.

use rand::SeedableRng;
use rand_xoshiro::Xoshiro256PlusPlus;

pub type StreamRng = Xoshiro256PlusPlus;

/// Reserved asset slot for streams that are not tied to one asset
/// (chain-level draws, index selection).
pub const CHAIN_SLOT: u64 = u64::MAX;

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// 64-bit key for stream `(seed, realization, slot)`.
#[inline]
pub fn stream_key(seed: u64, realization: u64, slot: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(seed) ^ realization) ^ slot.rotate_left(17))
}

#[inline]
pub fn stream(seed: u64, realization: u64, slot: u64) -> StreamRng {
    StreamRng::seed_from_u64(stream_key(seed, realization, slot))
}
