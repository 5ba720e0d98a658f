//! Seed streams.
//!
//! Every stochastic routine takes an explicit `u64` seed. Independent streams
//! are derived with a splitmix64 mix so that parallel rollouts never share
//! generator state.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives an independent child seed from `base` for stream `stream`.
pub fn derive(base: u64, stream: u64) -> u64 {
    splitmix64(splitmix64(base) ^ splitmix64(stream.wrapping_add(0x5851_F42D_4C95_7F2D)))
}

/// Derives a child seed along a path of stream ids.
pub fn derive_path(base: u64, path: &[u64]) -> u64 {
    path.iter().fold(base, |s, &p| derive(s, p))
}

pub fn rng(seed: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(seed)
}
