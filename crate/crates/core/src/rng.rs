//! Deterministic random streams.
//!
//! Every random decision in the pipeline draws from a [`Stream`] derived from
//! the master seed plus a path of tags (layer, generation, individual, ...).
//! Two streams with different paths are independent for practical purposes,
//! and a stream never depends on how many draws another stream has made, so
//! results do not change with evaluation order or thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Stream = ChaCha8Rng;

/// Stream purposes. Kept as constants so tag paths stay stable across versions.
pub mod tag {
    pub const BASIS: u64 = 1;
    pub const INIT: u64 = 2;
    pub const EVAL_SUBSET: u64 = 3;
    pub const FITNESS: u64 = 4;
    pub const VARIATION: u64 = 5;
    pub const SELECTION: u64 = 6;
    pub const FINAL_EVAL: u64 = 7;
    pub const HEAD_INIT: u64 = 8;
    pub const FINETUNE: u64 = 9;
    pub const DATA: u64 = 10;
    pub const VISUALIZE: u64 = 11;
    pub const BASELINE: u64 = 12;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Hashes a seed and a tag path into a new 64-bit seed.
pub fn derive_seed(seed: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(seed), |acc, &t| splitmix64(acc ^ splitmix64(t)))
}

/// A stream seeded from `seed` and the tag `path`.
pub fn stream(seed: u64, path: &[u64]) -> Stream {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, path))
}
