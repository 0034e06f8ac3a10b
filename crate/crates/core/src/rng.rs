//! Seed derivation.
//!
//! Every random decision in the pipeline draws from a stream derived from the
//! master seed and a path of integers (stage, sentence index, round, ...). Work
//! items therefore get the same stream no matter how they are scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub mod stage {
    pub const SPLIT: u64 = 1;
    pub const FINETUNE_MASK: u64 = 2;
    pub const FINETUNE_SHUFFLE: u64 = 3;
    pub const MODEL_INIT: u64 = 4;
    pub const GENERATE: u64 = 5;
    pub const CODEMIX: u64 = 6;
    pub const TAGGER: u64 = 7;
    pub const LABELWISE: u64 = 8;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(master), |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

pub fn stream(master: u64, path: &[u64]) -> Rng {
    Rng::seed_from_u64(derive_seed(master, path))
}
