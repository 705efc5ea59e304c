//! Convex blind calibration and its baselines.
//!
//! Writing the unknown gains through their inverses `Δ = D⁻¹ = diag(δ)`
//! turns `Y = D M₀ X` into the linear constraint `ΔY = M₀X`. Together with
//! the normalization `Σδᵢ = m`, which rules out the trivial pair `(0, 0)`,
//! the blind problem becomes the convex program
//!
//! ```text
//! min ‖X‖₁  s.t.  ΔY = M₀X,  Tr(Δ) = m
//! ```
//!
//! solved here by operator splitting ([`solve_calibrated`]). The baseline
//! that ignores decalibration is plain basis pursuit ([`solve_uncalibrated`]).
//! [`lp_oracle`] solves either program as a linear program by an independent
//! simplex routine and is used to cross-check the main path.

mod admm;
mod lp;
mod oracle;
mod polish;
mod projection;
mod prox;
mod supervised;

pub use lp::{simplex, LpSolution, StandardLp};
pub use oracle::{lp_oracle, ORACLE_MAX_VARIABLES};
pub use projection::{AffineProjector, ColumnProjector};
pub use prox::{soft_threshold, soft_threshold_in_place};
pub use supervised::supervised_calibrate;

use crate::error::{Error, Result};
use crate::matio;
use crate::model::MeasurementMatrix;
use admm::AffineSet;
use polish::PolishTolerances;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub max_iterations: usize,
    pub primal_tolerance: f64,
    pub dual_tolerance: f64,
    pub penalty_parameter: f64,
    pub feasibility_tolerance: f64,
    /// Residual balancing of the penalty parameter.
    pub adaptive_penalty: bool,
    /// Over-relaxation factor in (0, 2); 1 is plain splitting.
    pub relaxation: f64,
    /// Try certified active-set solves once the support settles.
    pub polish: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_iterations: 50_000,
            primal_tolerance: 1e-8,
            dual_tolerance: 1e-8,
            penalty_parameter: 1.0,
            feasibility_tolerance: 1e-9,
            adaptive_penalty: true,
            relaxation: 1.5,
            polish: true,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::param("max_iterations", "must be >= 1"));
        }
        for (name, v) in [
            ("primal_tolerance", self.primal_tolerance),
            ("dual_tolerance", self.dual_tolerance),
            ("penalty_parameter", self.penalty_parameter),
            ("feasibility_tolerance", self.feasibility_tolerance),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::param(name, format!("must be finite and > 0, got {v}")));
            }
        }
        if !(self.relaxation > 0.0 && self.relaxation < 2.0) {
            return Err(Error::param("relaxation", format!("must lie in (0, 2), got {}", self.relaxation)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Converged,
    IterationLimit,
    Infeasible,
}

/// Which program to solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Joint recovery of signals and inverse gains.
    Calibrated,
    /// Basis pursuit with `M₀` taken as exact.
    Uncalibrated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveResult {
    pub mode: Mode,
    pub status: Status,
    /// `‖X̂‖₁`, the sum of absolute entries.
    pub objective: f64,
    /// `‖Δ̂Y − M₀X̂‖_F / (1 + ‖Y‖_F)`, or `‖Y − M₀X̂‖_F / (1 + ‖Y‖_F)` uncalibrated.
    pub primal_residual: f64,
    /// `|Σδ̂ᵢ − m| / m`; zero in uncalibrated mode.
    pub trace_residual: f64,
    pub iterations: usize,
    /// Rows of `Y` that are identically zero: their gain is fixed only through the trace.
    #[serde(default)]
    pub unidentifiable_gains: Vec<usize>,
    #[serde(default)]
    pub monotonicity_violations: usize,
    #[serde(with = "matio::text")]
    pub x_hat: DMatrix<f64>,
    #[serde(with = "matio::text_opt", default)]
    pub delta_hat: Option<DMatrix<f64>>,
}

impl SolveResult {
    pub fn converged(&self) -> bool {
        self.status == Status::Converged
    }

    pub fn delta(&self) -> Option<DVector<f64>> {
        self.delta_hat
            .as_ref()
            .map(|d| DVector::from_column_slice(d.as_slice()))
    }
}

fn check_shapes(y: &DMatrix<f64>, m0: &MeasurementMatrix) -> Result<()> {
    if y.nrows() != m0.nrows() || y.ncols() == 0 {
        return Err(Error::shape(
            format!("Y with {} rows and L >= 1 columns", m0.nrows()),
            format!("{}x{}", y.nrows(), y.ncols()),
        ));
    }
    if m0.nrows() > m0.ncols() {
        return Err(Error::InvalidDimensions(format!(
            "M₀ must have m <= N, got {}x{}",
            m0.nrows(),
            m0.ncols()
        )));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::param("y", "entries must be finite"));
    }
    Ok(())
}

pub(crate) fn zero_rows(y: &DMatrix<f64>) -> Vec<usize> {
    y.row_iter()
        .enumerate()
        .filter(|(_, r)| r.iter().all(|v| *v == 0.0))
        .map(|(i, _)| i)
        .collect()
}

/// `‖diag(δ)Y − M₀X‖_F / (1 + ‖Y‖_F)` and `|Σδ − m| / m`.
pub fn calibrated_residuals(
    y: &DMatrix<f64>,
    m0: &DMatrix<f64>,
    x: &DMatrix<f64>,
    delta: &DVector<f64>,
) -> (f64, f64) {
    let dy = crate::model::apply_gains(delta, y);
    let r = (dy - m0 * x).norm() / (1.0 + y.norm());
    let m = m0.nrows() as f64;
    (r, (delta.sum() - m).abs() / m)
}

/// `‖Y − M₀X‖_F / (1 + ‖Y‖_F)`
pub fn uncalibrated_residual(y: &DMatrix<f64>, m0: &DMatrix<f64>, x: &DMatrix<f64>) -> f64 {
    (y - m0 * x).norm() / (1.0 + y.norm())
}

pub(crate) fn l1(x: &DMatrix<f64>) -> f64 {
    x.iter().map(|v| v.abs()).sum()
}

impl AffineSet for AffineProjector {
    fn dim(&self) -> usize {
        AffineProjector::dim(self)
    }

    fn penalized(&self) -> usize {
        self.n() * self.l()
    }

    fn project(&self, point: &[f64], out: &mut [f64]) {
        self.project_into(point, out)
    }

    fn polish(&self, z: &[f64], g: &[f64], tol: PolishTolerances) -> Option<Vec<f64>> {
        polish::polish_calibrated(self, z, g, tol)
    }

    fn crossover(&self, z: &[f64], g: &[f64]) -> Option<Vec<f64>> {
        polish::crossover_calibrated(self, z, g)
    }
}

struct ColumnSet<'a> {
    projector: &'a ColumnProjector,
    y: &'a [f64],
    offset: DVector<f64>,
}

impl AffineSet for ColumnSet<'_> {
    fn dim(&self) -> usize {
        self.offset.len()
    }

    fn penalized(&self) -> usize {
        self.offset.len()
    }

    fn project(&self, point: &[f64], out: &mut [f64]) {
        self.projector.project_into(&self.offset, point, out)
    }

    fn polish(&self, z: &[f64], g: &[f64], tol: PolishTolerances) -> Option<Vec<f64>> {
        polish::polish_column(self.projector, self.y, z, g, tol)
    }
}

/// Solve `min ‖X‖₁ s.t. diag(δ)Y = M₀X, Σδᵢ = m` over `(X, δ)`.
///
/// `δ` carries no sign constraint.
pub fn solve_calibrated(
    y: &DMatrix<f64>,
    m0: &MeasurementMatrix,
    config: &SolverConfig,
) -> Result<SolveResult> {
    config.validate()?;
    check_shapes(y, m0)?;
    let (m, n, l) = (m0.nrows(), m0.ncols(), y.ncols());
    let projector = AffineProjector::new(y, m0.entries())?;

    let mut start = vec![0.0; n * l + m];
    start[n * l..].fill(1.0);
    let out = admm::solve(&projector, start, config);

    let x_hat = DMatrix::from_column_slice(n, l, &out.x[..n * l]);
    let delta = DVector::from_column_slice(&out.x[n * l..]);
    let (primal_residual, trace_residual) = calibrated_residuals(y, m0.entries(), &x_hat, &delta);
    let feasible = primal_residual <= config.feasibility_tolerance
        && trace_residual <= config.feasibility_tolerance;
    let status = match (out.converged, feasible) {
        (false, _) => Status::IterationLimit,
        (true, false) => Status::Infeasible,
        (true, true) => Status::Converged,
    };
    if out.monotonicity_violations > 0 {
        log::warn!(
            "calibrated solve: {} residual growth events (step size?)",
            out.monotonicity_violations
        );
    }
    Ok(SolveResult {
        mode: Mode::Calibrated,
        status,
        objective: l1(&x_hat),
        primal_residual,
        trace_residual,
        iterations: out.iterations,
        unidentifiable_gains: zero_rows(y),
        monotonicity_violations: out.monotonicity_violations,
        x_hat,
        delta_hat: Some(DMatrix::from_column_slice(m, 1, delta.as_slice())),
    })
}

/// Solve `min ‖X‖₁ s.t. Y = M₀X`.
///
/// The program separates over columns; each column is solved on its own,
/// so the result on `Y` is exactly the concatenation of per-column results.
/// `iterations` reports the largest per-column count.
pub fn solve_uncalibrated(
    y: &DMatrix<f64>,
    m0: &MeasurementMatrix,
    config: &SolverConfig,
) -> Result<SolveResult> {
    config.validate()?;
    check_shapes(y, m0)?;
    let (n, l) = (m0.ncols(), y.ncols());
    let projector = ColumnProjector::new(m0.entries())?;

    let mut x_hat = DMatrix::zeros(n, l);
    let mut all_converged = true;
    let mut iterations = 0;
    let mut violations = 0;
    for j in 0..l {
        let col = &y.as_slice()[j * y.nrows()..(j + 1) * y.nrows()];
        let set = ColumnSet {
            projector: &projector,
            y: col,
            offset: projector.offset(col),
        };
        let out = admm::solve(&set, vec![0.0; n], config);
        all_converged &= out.converged;
        iterations = iterations.max(out.iterations);
        violations += out.monotonicity_violations;
        x_hat.column_mut(j).copy_from_slice(&out.x);
    }

    let primal_residual = uncalibrated_residual(y, m0.entries(), &x_hat);
    let status = if !all_converged {
        Status::IterationLimit
    } else if primal_residual > config.feasibility_tolerance {
        Status::Infeasible
    } else {
        Status::Converged
    };
    Ok(SolveResult {
        mode: Mode::Uncalibrated,
        status,
        objective: l1(&x_hat),
        primal_residual,
        trace_residual: 0.0,
        iterations,
        unidentifiable_gains: Vec::new(),
        monotonicity_violations: violations,
        x_hat,
        delta_hat: None,
    })
}

pub fn solve(
    mode: Mode,
    y: &DMatrix<f64>,
    m0: &MeasurementMatrix,
    config: &SolverConfig,
) -> Result<SolveResult> {
    match mode {
        Mode::Calibrated => solve_calibrated(y, m0, config),
        Mode::Uncalibrated => solve_uncalibrated(y, m0, config),
    }
}
