//! Penalization schemes for stochastic reflected parabolic equations on the
//! unit interval with zero Dirichlet data.
//!
//! The solver advances a finite-difference discretization with a Lie
//! splitting (explicit sources and noise, implicit diffusion, exact penalty
//! flow), sweeps the penalty parameter and runs a Picard iteration for
//! state-dependent coefficients.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod coefficients;
pub mod error;
pub mod mesh;
pub mod noise;
pub mod obstacle_solver;
pub mod stepper;
pub mod verification;

pub use coefficients::{
    check_contraction, empirical_lipschitz, AssumptionReport, CoefficientFn, CoefficientSet, Contraction,
    LipschitzConstants, Preset,
};
pub use error::{Error, Result};
pub use mesh::{EllipticOperator, Field, Mesh1D};
pub use noise::{derive_seed, sample_increment, NoiseIncrement, NoiseModel, NoiseStream, Spectrum};
pub use obstacle_solver::{
    choose_gamma_delta, picard_solve, skorokhod_pairing, solve_linear_obstacle, weighted_distance, weighted_norm,
    Diagnostics, ObstacleSolution, PenaltyDiagnostic, PenaltySchedule, PicardOutcome, PicardStep, PicardWeights,
};
pub use stepper::{
    deterministic_penalized, penalty_substep, simulate_path, simulate_paths, simulate_with, source_terms, step,
    Obstacle, ObstacleFn, PathDriver, PathRun, Problem, ReflectionMeasure, SolverConfig, SourceTerms, StepOutput,
    Trajectory,
};
pub use verification::{
    apriori_bounds, compare_measures, compare_solutions, energy_identity, projected_reference, AprioriRow,
    AprioriTable, ComparisonReport, EnergyReport,
};

/// Library version recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
