//! Success criteria that ignore the global scale of a blind solution.
//!
//! A blind solution is only defined up to `(X, Δ) → (cX, cΔ)`; the trace
//! constraint pins `c` but not to the planted value, so recovery is judged
//! by normalized correlation rather than distance.

use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

pub const DEFAULT_THRESHOLD: f64 = 0.995;

/// How the correlation is aggregated over the columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrelationScope {
    /// One correlation over the vectorized matrix.
    #[default]
    Global,
    /// Every column must pass on its own.
    PerColumn,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SuccessCriterion {
    pub threshold: f64,
    #[serde(default)]
    pub scope: CorrelationScope,
}

impl Default for SuccessCriterion {
    fn default() -> Self {
        Self {
            threshold: DEFAULT_THRESHOLD,
            scope: CorrelationScope::Global,
        }
    }
}

impl SuccessCriterion {
    pub fn new(threshold: f64) -> Result<Self> {
        let c = Self {
            threshold,
            ..Self::default()
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.threshold > 0.0 && self.threshold <= 1.0) {
            return Err(Error::param(
                "threshold",
                format!("must lie in (0, 1], got {}", self.threshold),
            ));
        }
        Ok(())
    }
}

fn same_shape(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::shape(
            format!("{}x{}", a.nrows(), a.ncols()),
            format!("{}x{}", b.nrows(), b.ncols()),
        ));
    }
    Ok(())
}

fn correlation(a: &[f64], b: &[f64]) -> Result<f64> {
    let na = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nb = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(Error::ZeroInput("normalized cross-correlation"));
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    Ok((dot.abs() / (na * nb)).min(1.0))
}

/// `|⟨vec a, vec b⟩| / (‖a‖_F ‖b‖_F)`.
pub fn normalized_cross_correlation(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<f64> {
    same_shape(a, b)?;
    correlation(a.as_slice(), b.as_slice())
}

/// Column-by-column correlations.
pub fn column_correlations(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<Vec<f64>> {
    same_shape(a, b)?;
    let n = a.nrows();
    a.as_slice()
        .chunks(n.max(1))
        .zip(b.as_slice().chunks(n.max(1)))
        .map(|(x, y)| correlation(x, y))
        .collect()
}

fn passes(x_true: &[f64], x_hat: &[f64], threshold: f64) -> bool {
    let zt = x_true.iter().all(|v| *v == 0.0);
    let zh = x_hat.iter().all(|v| *v == 0.0);
    match (zt, zh) {
        (true, true) => true,
        (true, false) | (false, true) => false,
        _ => correlation(x_true, x_hat).is_ok_and(|c| c >= threshold),
    }
}

pub fn is_success(x_true: &DMatrix<f64>, x_hat: &DMatrix<f64>, crit: &SuccessCriterion) -> Result<bool> {
    same_shape(x_true, x_hat)?;
    Ok(match crit.scope {
        CorrelationScope::Global => passes(x_true.as_slice(), x_hat.as_slice(), crit.threshold),
        CorrelationScope::PerColumn => {
            let n = x_true.nrows().max(1);
            x_true
                .as_slice()
                .chunks(n)
                .zip(x_hat.as_slice().chunks(n))
                .all(|(a, b)| passes(a, b, crit.threshold))
        }
    })
}

/// `min_c ‖c·δ̂ − 1/d‖₂ / ‖1/d‖₂`, with `c` the least-squares scale.
pub fn gain_recovery_error(d_true: &crate::model::GainVector, delta_hat: &DVector<f64>) -> Result<f64> {
    let target = d_true.inverse().into_inner();
    if target.len() != delta_hat.len() {
        return Err(Error::shape(
            format!("length {}", target.len()),
            format!("length {}", delta_hat.len()),
        ));
    }
    let hh = delta_hat.norm_squared();
    if hh == 0.0 {
        return Err(Error::ZeroInput("gain_recovery_error"));
    }
    let c = delta_hat.dot(&target) / hh;
    Ok((delta_hat * c - &target).norm() / target.norm())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::GainVector;
    use proptest::prelude::*;

    fn col(v: &[f64]) -> DMatrix<f64> {
        DMatrix::from_column_slice(v.len(), 1, v)
    }

    #[test]
    fn self_scale_and_orthogonal() {
        let x = DMatrix::from_row_slice(3, 2, &[1., -2., 0., 3., 0.5, 0.]);
        assert!((normalized_cross_correlation(&x, &x).unwrap() - 1.0).abs() < 1e-15);
        assert!((normalized_cross_correlation(&x, &(&x * -3.0)).unwrap() - 1.0).abs() < 1e-15);
        let e1 = col(&[1., 0., 0.]);
        let e2 = col(&[0., 1., 0.]);
        assert_eq!(normalized_cross_correlation(&e1, &e2).unwrap(), 0.0);
    }

    #[test]
    fn zero_and_shape_errors() {
        let z = col(&[0., 0.]);
        let a = col(&[1., 0.]);
        assert!(matches!(normalized_cross_correlation(&z, &a), Err(Error::ZeroInput(_))));
        assert!(normalized_cross_correlation(&a, &col(&[1., 0., 0.])).is_err());
    }

    #[test]
    fn success_cases() {
        let crit = SuccessCriterion::default();
        let x = DMatrix::from_row_slice(3, 2, &[1., -2., 0., 3., 0.5, 0.]);
        assert!(is_success(&x, &x, &crit).unwrap());
        assert!(!is_success(&x, &DMatrix::zeros(3, 2), &crit).unwrap());
        assert!(is_success(&DMatrix::zeros(3, 2), &DMatrix::zeros(3, 2), &crit).unwrap());
        assert!(!is_success(&DMatrix::zeros(3, 2), &x, &crit).unwrap());
    }

    #[test]
    fn orthogonal_mixing_just_below_threshold() {
        // x_hat = c·x + s·w with w ⟂ x, ‖w‖ = ‖x‖ has correlation exactly c / sqrt(c² + s²)
        let x = col(&[3., 0., -1., 2.]);
        let mut w = col(&[1., 5., 1., -1.]);
        let proj = x.dot(&w) / x.norm_squared();
        w -= &x * proj;
        w *= x.norm() / w.norm();
        let target: f64 = 0.9940;
        let s = (1.0 - target * target).sqrt();
        let x_hat = &x * target + &w * s;
        let c = normalized_cross_correlation(&x, &x_hat).unwrap();
        assert!((c - target).abs() < 1e-12);
        assert!(!is_success(&x, &x_hat, &SuccessCriterion::default()).unwrap());
        assert!(is_success(&x, &x_hat, &SuccessCriterion::new(0.99).unwrap()).unwrap());
    }

    #[test]
    fn per_column_requires_every_column() {
        let x = DMatrix::from_column_slice(2, 2, &[1., 0., 0., 1.]);
        let mut y = x.clone();
        y[(0, 1)] = 0.5; // column 2 correlation ≈ 0.894
        let global = SuccessCriterion::new(0.85).unwrap();
        let per = SuccessCriterion {
            threshold: 0.9,
            scope: CorrelationScope::PerColumn,
        };
        assert!(is_success(&x, &y, &global).unwrap());
        assert!(!is_success(&x, &y, &per).unwrap());
        let cc = column_correlations(&x, &y).unwrap();
        assert_eq!(cc[0], 1.0);
        assert!((cc[1] - 1.0 / 1.25f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn threshold_validation() {
        assert!(SuccessCriterion::new(0.0).is_err());
        assert!(SuccessCriterion::new(1.01).is_err());
        assert!(SuccessCriterion::new(1.0).is_ok());
    }

    #[test]
    fn gain_error_cases() {
        let d = GainVector::new(DVector::from_vec(vec![0.5, 2.0, 4.0])).unwrap();
        let inv = d.inverse().into_inner();
        assert!(gain_recovery_error(&d, &inv).unwrap() < 1e-15);
        assert!(gain_recovery_error(&d, &(&inv * 7.0)).unwrap() < 1e-15);
        // orthogonal to 1/d = (2, 0.5, 0.25)
        let orth = DVector::from_vec(vec![0.5, -2.0, 0.0]);
        assert!((gain_recovery_error(&d, &orth).unwrap() - 1.0).abs() < 1e-15);
        assert!(gain_recovery_error(&d, &DVector::zeros(3)).is_err());
    }

    proptest! {
        #[test]
        fn correlation_invariants(a in proptest::collection::vec(-10f64..10.0, 6),
                                  b in proptest::collection::vec(-10f64..10.0, 6),
                                  c in prop_oneof![-100f64..-1e-3, 1e-3f64..100.0],
                                  t1 in 0.01f64..1.0, t2 in 0.01f64..1.0) {
            let a = DMatrix::from_column_slice(3, 2, &a);
            let b = DMatrix::from_column_slice(3, 2, &b);
            prop_assume!(a.norm() > 1e-6 && b.norm() > 1e-6);
            let ab = normalized_cross_correlation(&a, &b).unwrap();
            let ba = normalized_cross_correlation(&b, &a).unwrap();
            let acb = normalized_cross_correlation(&a, &(&b * c)).unwrap();
            prop_assert!((0.0..=1.0).contains(&ab));
            prop_assert!((ab - ba).abs() < 1e-12);
            prop_assert!((ab - acb).abs() < 1e-12);
            let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
            if is_success(&a, &b, &SuccessCriterion::new(hi).unwrap()).unwrap() {
                prop_assert!(is_success(&a, &b, &SuccessCriterion::new(lo).unwrap()).unwrap());
            }
        }
    }
}
