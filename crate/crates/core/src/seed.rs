//! Seed derivation.
//!
//! Every random stream is seeded from a master seed and a path of counters:
//! `derive_seed(master, &[a, b, c])` folds each component through SplitMix64,
//! so any single run can be reproduced from `(master, path)` alone.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(master), |acc, &c| splitmix64(acc ^ splitmix64(c)))
}

/// The RNG used throughout the crate.
pub type Rng = ChaCha8Rng;

pub fn rng_from(master: u64, path: &[u64]) -> Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, path))
}

/// Stream tags for the counter path.
pub mod stream {
    pub const INIT: u64 = 1;
    pub const TRAIN: u64 = 2;
    pub const SAMPLE: u64 = 3;
    pub const FILL: u64 = 4;
    pub const TRAIN_SAMPLE: u64 = 5;
    pub const PERMUTATION: u64 = 6;
}
