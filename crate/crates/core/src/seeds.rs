//! Deterministic seed derivation for trials and per-agent noise streams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of trial `trial` under `master`: `mix64(master + trial)`.
pub fn trial_seed(master: u64, trial: usize) -> u64 {
    mix64(master.wrapping_add(trial as u64))
}

/// Independent noise stream of `agent` within a trial.
pub fn agent_rng(trial_seed: u64, agent: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(trial_seed);
    rng.set_stream(agent as u64);
    rng
}
