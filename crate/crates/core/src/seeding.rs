//! Splittable seed derivation.
//!
//! Child seeds are computed from a parent seed and a list of tags with the
//! SplitMix64 finalizer, so any sub-stream (a layer's mask, a sweep trial)
//! can be regenerated without replaying a global generator.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

#[inline]
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Folds each tag into the seed in order.
pub fn derive_seed(seed: u64, tags: &[u64]) -> u64 {
    tags.iter().fold(splitmix64(seed), |acc, &t| splitmix64(acc ^ splitmix64(t)))
}

pub fn rng_from(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

// Stream tags.
pub const TAG_MASK: u64 = 1;
pub const TAG_INIT: u64 = 2;
pub const TAG_HEAD: u64 = 3;
pub const TAG_SHUFFLE: u64 = 4;
