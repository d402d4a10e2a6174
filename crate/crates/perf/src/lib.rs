//! Fixtures shared by the benchmarks.

use secirs::channel::{rng_from_seed, sample_legit};
use secirs::{ChannelRealization, PhaseConfig, SystemParams};

/// Reference-setting realization and a random phase configuration.
pub fn fixture(n_s: usize, seed: u64) -> (ChannelRealization, SystemParams, PhaseConfig) {
    let params = SystemParams::reference(n_s);
    let real = sample_legit(&params, seed);
    let phase = PhaseConfig::random(&mut rng_from_seed(seed ^ 0x5eed), n_s);
    (real, params, phase)
}
