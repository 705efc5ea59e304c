//! Blind calibration of compressed sensing measurements with unknown
//! per-measure gains.
//!
//! - [`model`]: instance generation (`Y = D₀M₀X₀`) and parameter arithmetic
//! - [`solver`]: the convex calibrated program, the uncalibrated baseline,
//!   supervised gain fitting and an LP oracle
//! - [`metrics`]: scale-invariant success criteria
//! - [`experiment`]: seeded phase-transition sweeps with resumable persistence
//! - [`cli`]: the `blindcal` command-line surface

pub mod cli;
pub mod error;
pub mod experiment;
pub mod matio;
pub mod metrics;
pub mod model;
pub mod rng;
pub mod solver;

pub use error::{Error, Result};
pub use metrics::{is_success, normalized_cross_correlation, SuccessCriterion};
pub use model::{make_instance, Dimensions, GainVector, MeasurementMatrix, ProblemInstance, SignalMatrix};
pub use solver::{solve_calibrated, solve_uncalibrated, Mode, SolveResult, SolverConfig, Status};
