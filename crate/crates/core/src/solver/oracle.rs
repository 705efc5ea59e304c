//! Linear-programming reformulation used as an independent check.
//!
//! With `X = P − Q` and `δ = δ⁺ − δ⁻` (all parts nonnegative) the
//! calibrated program is the LP
//!
//! ```text
//! min 1ᵀ(P + Q)
//! s.t. M₀(P − Q)ₗ − diag(yₗ)(δ⁺ − δ⁻) = 0   for every column l
//!      1ᵀ(δ⁺ − δ⁻) = m
//! ```
//!
//! and the uncalibrated one drops `δ` and uses `M₀(P − Q) = Y`.

use super::lp::{simplex, StandardLp};
use super::{calibrated_residuals, l1, uncalibrated_residual, zero_rows, Mode, SolveResult, Status};
use crate::error::{Error, Result};
use crate::model::MeasurementMatrix;
use nalgebra::{DMatrix, DVector};

/// Upper bound on `NL + m` (`NL` uncalibrated) accepted by [`lp_oracle`].
pub const ORACLE_MAX_VARIABLES: usize = 500;

pub fn lp_oracle(y: &DMatrix<f64>, m0: &MeasurementMatrix, mode: Mode) -> Result<SolveResult> {
    let a0 = m0.entries();
    let (m, n) = a0.shape();
    let l = y.ncols();
    if y.nrows() != m || l == 0 {
        return Err(Error::shape(
            format!("Y with {m} rows"),
            format!("{}x{}", y.nrows(), y.ncols()),
        ));
    }
    let nl = n * l;
    let free = match mode {
        Mode::Calibrated => m,
        Mode::Uncalibrated => 0,
    };
    if nl + free > ORACLE_MAX_VARIABLES {
        return Err(Error::SizeGuard {
            vars: nl + free,
            limit: ORACLE_MAX_VARIABLES,
        });
    }

    let sol = simplex(&standard_form(y, a0, mode))?;
    let x = &sol.x;
    let x_hat = DMatrix::from_fn(n, l, |j, col| x[col * n + j] - x[nl + col * n + j]);

    let result = match mode {
        Mode::Calibrated => {
            let delta = DVector::from_fn(m, |i, _| x[2 * nl + i] - x[2 * nl + m + i]);
            let (primal_residual, trace_residual) = calibrated_residuals(y, a0, &x_hat, &delta);
            SolveResult {
                mode,
                status: Status::Converged,
                objective: l1(&x_hat),
                primal_residual,
                trace_residual,
                iterations: sol.pivots,
                unidentifiable_gains: zero_rows(y),
                monotonicity_violations: 0,
                x_hat,
                delta_hat: Some(DMatrix::from_column_slice(m, 1, delta.as_slice())),
            }
        }
        Mode::Uncalibrated => SolveResult {
            mode,
            status: Status::Converged,
            objective: l1(&x_hat),
            primal_residual: uncalibrated_residual(y, a0, &x_hat),
            trace_residual: 0.0,
            iterations: sol.pivots,
            unidentifiable_gains: Vec::new(),
            monotonicity_violations: 0,
            x_hat,
            delta_hat: None,
        },
    };
    Ok(result)
}

/// The LP above in standard form; columns are `P, Q, δ⁺, δ⁻` in that order.
pub(crate) fn standard_form(y: &DMatrix<f64>, a0: &DMatrix<f64>, mode: Mode) -> StandardLp {
    let (m, n) = a0.shape();
    let l = y.ncols();
    let nl = n * l;
    let free = match mode {
        Mode::Calibrated => m,
        Mode::Uncalibrated => 0,
    };
    let rows = m * l + usize::from(mode == Mode::Calibrated);
    let cols = 2 * nl + 2 * free;
    let mut a = DMatrix::zeros(rows, cols);
    let mut b = DVector::zeros(rows);
    let mut c = DVector::zeros(cols);
    c.rows_mut(0, 2 * nl).fill(1.0);
    for col in 0..l {
        for i in 0..m {
            let r = col * m + i;
            for j in 0..n {
                a[(r, col * n + j)] = a0[(i, j)];
                a[(r, nl + col * n + j)] = -a0[(i, j)];
            }
            match mode {
                Mode::Calibrated => {
                    a[(r, 2 * nl + i)] = -y[(i, col)];
                    a[(r, 2 * nl + m + i)] = y[(i, col)];
                }
                Mode::Uncalibrated => b[r] = y[(i, col)],
            }
        }
    }
    if mode == Mode::Calibrated {
        for i in 0..m {
            a[(rows - 1, 2 * nl + i)] = 1.0;
            a[(rows - 1, 2 * nl + m + i)] = -1.0;
        }
        b[rows - 1] = m as f64;
    }

    StandardLp { a, b, c }
}
