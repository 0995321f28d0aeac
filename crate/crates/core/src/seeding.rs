//! Deterministic seed derivation.
//!
//! A master seed is split into per-trial seeds with SplitMix64 applied to
//! `master + (index + 1) * GOLDEN`. Trial `i` therefore gets the same seed
//! no matter how many trials run, which keeps Monte-Carlo runs
//! prefix-stable. Inside a trial every consumer of randomness draws from
//! its own ChaCha stream, so adding a sensor or a noise source never shifts
//! the draws of another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// Stream identifiers inside one trial.
pub mod stream {
    pub const TARGET_INIT: u64 = 1;
    pub const PROCESS_NOISE: u64 = 2;
    pub const PLACEMENT: u64 = 3;
    pub const WEIGHTS: u64 = 4;
    pub const ESTIMATE_INIT: u64 = 5;
    pub const TOPOLOGY: u64 = 6;
    /// Measurement noise of sensor `i` uses `SENSOR_BASE + i`.
    pub const SENSOR_BASE: u64 = 1 << 20;
}

pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn trial_seed(master: u64, trial: usize) -> u64 {
    splitmix64(master.wrapping_add((trial as u64 + 1).wrapping_mul(GOLDEN)))
}

pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn sensor_rng(seed: u64, sensor: usize) -> ChaCha8Rng {
    stream_rng(seed, stream::SENSOR_BASE + sensor as u64)
}
