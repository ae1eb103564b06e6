//! Seed derivation. Every random stream in a run descends from one 64-bit
//! root seed: `child = mix(parent ⊕ φ·(tag + 1))` with the SplitMix64
//! finalizer as `mix`. Streams are keyed by role tags and indices so
//! parallel trials never share or reorder randomness.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Child seed for `tag` under `parent`.
#[inline]
pub fn split(parent: u64, tag: u64) -> u64 {
    mix64(parent ^ GOLDEN.wrapping_mul(tag.wrapping_add(1)))
}

/// Child seed for a path of tags.
pub fn split_path(parent: u64, tags: &[u64]) -> u64 {
    tags.iter().fold(parent, |s, &t| split(s, t))
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Role tags for the sub-streams of one trial.
pub mod stream {
    pub const SCENE: u64 = 1;
    pub const DENSITY: u64 = 2;
    pub const TRAY_DETECT: u64 = 3;
    pub const BIN_DETECT: u64 = 4;
    pub const POLICY: u64 = 5;
    pub const PLANNER: u64 = 6;
    pub const WORLD: u64 = 7;
}
