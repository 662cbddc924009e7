//! Seed derivation for independent replica streams.
//!
//! Every random quantity flows from one root seed. Replica `k` of purpose
//! `tag` draws from a ChaCha stream selected by `(tag, k)`, so results do not
//! depend on which thread ran which replica.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// Purpose tags keep streams for different consumers of the same root seed apart.
pub mod tag {
    pub const JUMPS: u64 = 1;
    pub const BROWNIAN: u64 = 2;
    pub const LIMIT_MEASURE: u64 = 3;
    pub const RATES: u64 = 4;
    pub const CHAIN: u64 = 5;
    pub const BLUR: u64 = 6;
    pub const PRELIMIT: u64 = 7;
}

/// Root generator for a seed, stream 0.
pub fn root(seed: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Generator for replica `index` of purpose `tag`.
pub fn stream(seed: u64, tag: u64, index: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    rng.set_stream(index);
    rng
}
