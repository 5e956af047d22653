//! Data-driven stochastic reachability for Markov control processes.
//!
//! The crate learns a transition kernel from sampled one-step transitions,
//! embeds conditional distributions either exactly (Gram matrix over the
//! sample) or through random Fourier features, and runs the backward
//! first-hitting recursion to produce safety-probability fields. Grid-based
//! dynamic programming and Monte Carlo simulation serve as reference
//! solvers, and the built-in benchmark systems (double integrator, planar
//! quadrotor, and its repeated variant) exercise the full pipeline.

extern crate blas_src;

pub mod embedding;
pub mod error;
pub mod geometry;
pub mod kernels;
pub mod oracles;
pub mod policy;
pub mod problem;
pub mod reachability;
pub mod rff;
pub mod rng;
pub mod sample;
pub mod sampling;
pub mod systems;

pub use embedding::{fit_exact, fit_exact_blocks, fit_rff, theoretical_lambda_schedule, Embedding, ExactEmbedding, RffEmbedding};
pub use error::{CoreError, Result};
pub use geometry::{HitLabel, HyperRectangle, SetPredicate};
pub use kernels::{gram, median_heuristic, regularized_spd_solve, GaussianKernel, Kernel, ProductKernel, DEFAULT_LAMBDA, DEFAULT_SIGMA};
pub use oracles::{dp_solve, hoeffding_radius99, mc_estimate, DpGrid, DpSolution, McEstimate};
pub use policy::MarkovPolicy;
pub use problem::{first_hit_label, SafetyProblem};
pub use reachability::{backward_recursion, grid_points, grid_points_slice, safety_probability, FieldMeta, RecursionOptions, SafetyField};
pub use rff::{kernel_estimate, sample_basis, sample_basis_per_block, JointFeatures, RffBasis};
pub use rng::derive_stream;
pub use sample::TransitionSample;
pub use sampling::{default_integrator_plan, default_quadrotor_plan, generate_sample, SamplingPlan};
pub use systems::{
    altitude_rect, default_hover_reference, finite_difference_jacobian, hover_discrete_linearization,
    hover_linearization, hover_lqr_policy, integrator_safe_set, integrator_target_set,
    quadrotor_safe_set, quadrotor_target_set, repeated_quadrotor_safe_set,
    repeated_quadrotor_shifts, repeated_quadrotor_target_set, repeated_system, simulate, tube_rect,
    Disturbance, LqrWeights, QuadrotorParams, SystemModel,
};
