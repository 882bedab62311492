//! Sub-seed derivation.
//!
//! Every source of randomness in the crate draws from its own stream,
//! derived from one top-level seed. Streams stay independent so that,
//! e.g., skipping the domain-head initialization in a baseline run does
//! not shift the shuffling of source rows.

use rand_chacha::ChaCha8Rng;
use rand_chacha::rand_core::SeedableRng;

/// splitmix64 finalizer; decorrelates structured inputs.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    mix(seed ^ mix(stream))
}

pub fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, stream))
}

/// Stream ids used across the crate. Values are arbitrary but fixed;
/// changing them changes every seeded artifact.
pub mod streams {
    pub const INIT_EXTRACTOR: u64 = 1;
    pub const INIT_LABEL_HEAD: u64 = 2;
    pub const INIT_DOMAIN_HEAD: u64 = 3;
    pub const SHUFFLE_SOURCE: u64 = 4;
    pub const SHUFFLE_TARGET: u64 = 5;
    pub const HOLDOUT_SPLIT: u64 = 6;
    pub const PROBE: u64 = 7;
    pub const SYNTH_SOURCE: u64 = 8;
    pub const SYNTH_TARGET: u64 = 9;
    pub const RCV: u64 = 10;
    pub const DNN_TRAIN: u64 = 11;
    pub const SYNTH_GEOMETRY: u64 = 12;
    pub const CORPUS_TRAIN_SOURCE: u64 = 13;
    pub const CORPUS_TRAIN_TARGET: u64 = 14;
    pub const CORPUS_TEST_SOURCE: u64 = 15;
    pub const CORPUS_TEST_TARGET: u64 = 16;
    pub const STAGE_DANN: u64 = 17;
    pub const STAGE_DNN: u64 = 18;
}
