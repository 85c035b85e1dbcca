//! Seed derivation. Every random stream in the crate is a ChaCha8 generator
//! seeded from a parent seed and a stream label, so runs replay bit-exactly.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// SplitMix64 finalizer applied to `seed ^ stream`-style mixing.
pub fn derive(seed: u64, stream: u64) -> u64 {
    let mut z = seed
        .wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn rng(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Stream labels.
pub mod stream {
    pub const SCENARIO: u64 = 1;
    pub const USER: u64 = 2;
    pub const PLANNER: u64 = 3;
    pub const POLICY_MIX: u64 = 4;
    pub const ROLLOUT: u64 = 5;
    pub const EXPANSION: u64 = 6;
    pub const SAMPLE: u64 = 7;
}
