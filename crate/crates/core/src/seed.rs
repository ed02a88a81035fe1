//! Deterministic seed derivation.
//!
//! Every per-item random stream (one hypergraph, one initial state, one fold shuffle) gets its
//! own seed `derive(master, stream, index)`, a SplitMix64 hash of the three values. Items can
//! therefore be generated in any order, or concurrently, with identical results.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Stream tags used by the crate.
pub mod stream {
    pub const HYPERGRAPH: u64 = 1;
    pub const STATE: u64 = 2;
    pub const FOLDS: u64 = 3;
    pub const INIT: u64 = 4;
    pub const SHUFFLE: u64 = 5;
    pub const HOLDOUT: u64 = 6;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive(master: u64, stream: u64, index: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(master) ^ stream) ^ index)
}

pub fn rng(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
