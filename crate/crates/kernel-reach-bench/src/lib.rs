//! Shared fixtures for the criterion benchmarks.

use kernel_reach_core::{
    default_integrator_plan, generate_sample, Disturbance, MarkovPolicy, Result, SystemModel,
    TransitionSample,
};

/// A small reproducible integrator dataset for micro-benchmarks.
pub fn integrator_sample(m: usize, seed: u64) -> Result<TransitionSample> {
    let system = SystemModel::integrator(0.25, Disturbance::isotropic_gaussian(2, 0.01)?)?;
    generate_sample(
        &system,
        &MarkovPolicy::zero(1),
        &default_integrator_plan(),
        m,
        seed,
    )
}
