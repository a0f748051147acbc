//! Deterministic seed derivation.
//!
//! Every random stream in a run is keyed by the master seed plus a path of
//! small integer tags (fold index, horizon, ...), so results do not depend on
//! the order in which parallel workers start.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const TAG_OUTER_FOLD: u64 = 1;
pub const TAG_INTERMEDIATE_FULL: u64 = 2;
pub const TAG_INTERMEDIATE_OOF: u64 = 3;
pub const TAG_TARGET: u64 = 4;
pub const TAG_FOLD_ASSIGNMENT: u64 = 5;
pub const TAG_EXPLAIN: u64 = 6;
pub const TAG_SYNTH_PATIENT: u64 = 7;
pub const TAG_SYNTH_BOLUS: u64 = 8;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive(master: u64, tags: &[u64]) -> u64 {
    tags.iter()
        .fold(splitmix64(master), |acc, &t| splitmix64(acc ^ splitmix64(t)))
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
