//! Deterministic random substreams.
//!
//! Every random draw in the filter and the simulator comes from a stream
//! keyed by `(seed, tag, step, index)`, so results do not depend on the order
//! in which independent pieces of work are executed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Stream tags. Distinct tags never share a substream.
pub mod tag {
    pub const AGENT_INIT: u64 = 1;
    pub const AGENT_PREDICT: u64 = 2;
    pub const FEATURE_PREDICT: u64 = 3;
    pub const BIRTH: u64 = 4;
    pub const RESAMPLE_AGENT: u64 = 5;
    pub const RESAMPLE_FEATURE: u64 = 6;
    pub const ANCHOR_INIT: u64 = 7;
    pub const SYNTH: u64 = 8;
    pub const RUN: u64 = 9;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes the key into a single 64-bit seed.
pub fn derive_seed(seed: u64, tag: u64, step: u64, index: u64) -> u64 {
    let mut h = splitmix64(seed);
    h = splitmix64(h ^ tag.wrapping_mul(0xD6E8_FEB8_6659_FD93));
    h = splitmix64(h ^ step.wrapping_mul(0xA076_1D64_78BD_642F));
    splitmix64(h ^ index.wrapping_mul(0xE703_7ED1_A0B4_28DB))
}

pub fn stream(seed: u64, tag: u64, step: u64, index: u64) -> StreamRng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, tag, step, index))
}
