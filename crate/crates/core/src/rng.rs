//! Seed derivation helpers shared by every stochastic stage.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Combines a seed with a sequence of stream identifiers.
pub fn derive_seed(seed: u64, streams: &[u64]) -> u64 {
    streams
        .iter()
        .fold(mix64(seed), |acc, &s| mix64(acc ^ mix64(s.wrapping_add(0x5851_F42D_4C95_7F2D))))
}

pub fn stream(seed: u64, streams: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, streams))
}
