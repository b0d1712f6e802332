//! Reservoir computing with a vestibular-inspired physical reservoir.
//!
//! Each reservoir node couples a damped endolymph/cupula oscillator to a
//! FitzHugh-Nagumo hair cell. The crate covers benchmark data generation,
//! reservoir topologies, open- and closed-loop driving, ridge readouts,
//! attractor statistics, memory functions and an experiment harness.

pub mod dynamics;
pub mod error;
pub mod harness;
pub mod io;
pub mod linalg;
pub mod memory;
pub mod metrics;
pub mod readout;
pub mod reservoir;
pub mod topology;

pub use dynamics::{Benchmark, FoodChainParams, LorenzParams, System, TimeSeries};
pub use error::{Error, Result};
pub use harness::{ExperimentConfig, ExperimentReport, Topology};
pub use memory::{LinearEsn, MemoryCurve, MemoryMethod};
pub use metrics::{AttractorHistogram, PredictionStats};
pub use readout::ReadoutMatrix;
pub use reservoir::{ReservoirConfig, ReservoirState, VestibularParams};
pub use topology::{ConnectivityMatrix, InputWeights, TopologyKind};

/// Deterministic generator used throughout the crate.
pub type SeededRng = rand_chacha::ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> SeededRng {
    use rand::SeedableRng;
    SeededRng::seed_from_u64(seed)
}
