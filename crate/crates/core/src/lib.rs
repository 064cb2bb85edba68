//! CRAB and dressed-CRAB (dCRAB) optimal control of state transfers in small
//! random spin chains, plus numerical diagnostics of the control landscape.
//!
//! Layout:
//! - [`quantum`]: Hamiltonians, piecewise-constant propagation, fidelity.
//! - [`pulse`]: randomized sine bases, dressed pulses, hard-wall clipping.
//! - [`simplex`]: Nelder-Mead minimizer used as the inner loop.
//! - [`engine`]: CRAB/dCRAB drivers, constraints, effort accounting.
//! - [`landscape`]: gradient kernel, tangent-space updates, trap certificates.
//! - [`experiment`]: instance generation, seeded sweeps, CSV tables.

pub mod engine;
pub mod error;
pub mod experiment;
pub mod landscape;
pub mod pulse;
pub mod quantum;
pub mod simplex;

pub use engine::{
    effort_metric, objective_value, run_crab, run_dcrab, Constraint, CrabConfig, OptimizationRecord,
};
pub use error::{Error, Result};
pub use experiment::{
    bandwidth_bound, emit_csv, generate_instance, run_sweep, ExperimentConfig, ExperimentKind, Method,
    SweepRow, SweepTable,
};
pub use landscape::{
    directional_derivative, gradient_kernel, gram_schmidt, state_updates, tangent_rank, AdjointTrajectory, Kernel,
    TangentUpdateSet,
};
pub use pulse::{clip, sample_basis, BasisFunction, DressedPulse, SuperIteration};
pub use quantum::{
    build_hamiltonians, fidelity, propagate, random_state, HermitianOperator, QuantumState, SpinProblem,
    TimeGrid,
};
pub use simplex::{minimize, MinimizeResult, SimplexConfig, Status};
