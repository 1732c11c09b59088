//! Seed plumbing. Every random decision in the toolkit flows from one config
//! seed; per-phase streams are derived with fixed offsets so adding a phase
//! never shifts another phase's stream.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Fixed phase tags for sub-seed derivation.
pub mod phase {
    pub const PARAM_INIT: u64 = 1;
    pub const EPOCH_SHUFFLE: u64 = 2;
    pub const PATH_SAMPLE: u64 = 3;
    pub const CANDIDATE_SAMPLE: u64 = 4;
}

const MIX: u64 = 0x9E37_79B9_7F4A_7C15;

fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic RNG for (seed, phase); `extra` folds in e.g. an epoch number
/// or query index.
pub fn phase_rng(seed: u64, phase: u64, extra: u64) -> ChaCha8Rng {
    let s = mix64(seed ^ phase.wrapping_mul(MIX) ^ mix64(extra.wrapping_mul(MIX)));
    ChaCha8Rng::seed_from_u64(s)
}
