//! Shared fixtures for the criterion benchmarks.

use vestibular::dynamics::{generate_benchmark, Benchmark, TimeSeries};
use vestibular::reservoir::ReservoirConfig;
use vestibular::topology::{build_coupled, build_input_weights, build_uncoupled};
use vestibular::{rng_from_seed, Result};

/// Normalised Lorenz samples at the default sampling.
pub fn lorenz_series(len: usize) -> Result<TimeSeries> {
    let b = Benchmark::Lorenz;
    generate_benchmark(b.system(), 1e-3, 0.1, len, 500, b.default_state0())
}

/// Reservoir with `n` nodes and `d` inputs at the default settings.
pub fn reservoir(n: usize, d: usize, coupled: bool, seed: u64) -> Result<ReservoirConfig> {
    let mut rng = rng_from_seed(seed);
    let a = if coupled { build_coupled(n, 0.4, 0.8, &mut rng)? } else { build_uncoupled(n, 0.5, &mut rng)? };
    let w = build_input_weights(n, d, 1.0, &mut rng)?;
    ReservoirConfig::new(a, w)
}
