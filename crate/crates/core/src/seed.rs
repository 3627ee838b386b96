//! Seed derivation for reproducible, partitionable random streams.
//!
//! Every random quantity in the crate is drawn from a ChaCha stream whose seed is
//! derived from a master seed, a stream tag and an index. Any worker can therefore
//! regenerate example `i` without touching examples `0..i`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream tags keep training, held-out and test draws disjoint under one master seed.
pub mod stream {
    pub const DATASET: u64 = 0x5a17_0001;
    pub const TRAIN: u64 = 0x5a17_0002;
    pub const HELDOUT: u64 = 0x5a17_0003;
    pub const TEST: u64 = 0x5a17_0004;
    pub const INIT: u64 = 0x5a17_0005;
    pub const AMPLITUDE: u64 = 0x5a17_0006;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes a master seed with a stream tag and an index into a new 64-bit seed.
pub fn derive(seed: u64, tag: u64, index: u64) -> u64 {
    splitmix64(splitmix64(seed ^ splitmix64(tag)) ^ index)
}

/// RNG for element `index` of stream `tag`.
pub fn rng_for(seed: u64, tag: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(seed, tag, index))
}
