//! Shared fixtures for the benchmarks.

use labnet_core::datagen::{MixtureExample, SimulationConfig, Simulator};
use labnet_core::{ModelConfig, Profile, RunConfig};

/// Desk-profile mixture of `seconds` length.
pub fn desk_example(seconds: f64) -> MixtureExample {
    let sim = Simulator::new(SimulationConfig {
        duration_s: seconds,
        ..SimulationConfig::default()
    })
    .expect("default simulation is valid");
    sim.generate(1, "bench", 0).expect("default scene is feasible")
}

pub fn desk_model() -> ModelConfig {
    RunConfig::for_profile(Profile::Desk).model
}
