//! Euclidean projections onto the affine feasible sets.
//!
//! The calibrated set is `{(X, δ) : M₀X = diag(δ)Y, Σδᵢ = m}`. Its
//! constraint Gram matrix is block structured, so instead of factoring the
//! full `(mL+1)²` system we eliminate `X`:
//!
//! * for fixed `δ`, the closest `X` is `X₀ − M₀ᵀK⁻¹(M₀X₀ − diag(δ)Y)` with `K = M₀M₀ᵀ`;
//! * substituting leaves a quadratic in `δ` with Hessian
//!   `H = I + K⁻¹ ∘ (YYᵀ)` (Hadamard product), plus the trace constraint.
//!
//! Both `K` and `H` are m × m and factored once per `(Y, M₀)`.

use crate::error::{Error, Result};
use nalgebra::{Cholesky, DMatrix, DMatrixView, DVector, Dyn};

/// Pivot ratio below which `M₀M₀ᵀ` is treated as singular.
const RANK_TOLERANCE: f64 = 1e-13;

fn gram_inverse(m0: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let k = m0 * m0.transpose();
    let chol = Cholesky::new(k).ok_or(Error::RankDeficient { ratio: 0.0 })?;
    check_pivots(&chol)?;
    Ok(chol.inverse())
}

fn check_pivots(chol: &Cholesky<f64, Dyn>) -> Result<()> {
    let diag = chol.l_dirty().diagonal();
    if diag.is_empty() {
        return Ok(());
    }
    let lo = diag.min();
    let hi = diag.max();
    let ratio = (lo / hi).powi(2);
    if !(ratio > RANK_TOLERANCE) {
        return Err(Error::RankDeficient { ratio });
    }
    Ok(())
}

/// Cached projector onto the calibrated feasible set for one `(Y, M₀)`.
#[derive(Debug, Clone)]
pub struct AffineProjector {
    pub(crate) m0: DMatrix<f64>,
    pub(crate) y: DMatrix<f64>,
    /// `K⁻¹M₀`
    pub(crate) k_inv_m0: DMatrix<f64>,
    k_inv: DMatrix<f64>,
    schur: Cholesky<f64, Dyn>,
    h_inv_ones: DVector<f64>,
    ones_h_inv_ones: f64,
}

impl AffineProjector {
    pub fn new(y: &DMatrix<f64>, m0: &DMatrix<f64>) -> Result<Self> {
        let m = m0.nrows();
        if y.nrows() != m || y.ncols() == 0 {
            return Err(Error::shape(
                format!("Y with {m} rows and at least one column"),
                format!("{}x{}", y.nrows(), y.ncols()),
            ));
        }
        let k_inv = gram_inverse(m0)?;
        let k_inv_m0 = &k_inv * m0;
        let yyt = y * y.transpose();
        let h = DMatrix::identity(m, m) + k_inv.component_mul(&yyt);
        let schur = Cholesky::new(h).ok_or(Error::RankDeficient { ratio: 0.0 })?;
        let h_inv_ones = schur.solve(&DVector::from_element(m, 1.0));
        let ones_h_inv_ones = h_inv_ones.sum();
        Ok(Self {
            m0: m0.clone(),
            y: y.clone(),
            k_inv_m0,
            k_inv,
            schur,
            h_inv_ones,
            ones_h_inv_ones,
        })
    }

    pub fn n(&self) -> usize {
        self.m0.ncols()
    }

    pub fn m(&self) -> usize {
        self.m0.nrows()
    }

    pub fn l(&self) -> usize {
        self.y.ncols()
    }

    /// Length of the stacked vector `(vec(X), δ)`, with `vec` column-major.
    pub fn dim(&self) -> usize {
        self.n() * self.l() + self.m()
    }

    /// Project the stacked point `(vec(X), δ)`.
    pub fn project_stacked(&self, point: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.project_into(point, &mut out);
        out
    }

    pub fn project(&self, x: &DMatrix<f64>, delta: &DVector<f64>) -> (DMatrix<f64>, DVector<f64>) {
        let mut stacked = x.as_slice().to_vec();
        stacked.extend_from_slice(delta.as_slice());
        let out = self.project_stacked(&stacked);
        let nl = self.n() * self.l();
        (
            DMatrix::from_column_slice(self.n(), self.l(), &out[..nl]),
            DVector::from_column_slice(&out[nl..]),
        )
    }

    pub(crate) fn project_into(&self, point: &[f64], out: &mut [f64]) {
        let (n, m, l) = (self.n(), self.m(), self.l());
        let nl = n * l;
        assert_eq!(point.len(), nl + m, "stacked point length");
        let x0 = DMatrixView::from_slice(&point[..nl], n, l);
        let d0 = &point[nl..];

        // S = K⁻¹M₀X₀; g = δ₀ + rowsum(Y ∘ S)
        let s = &self.k_inv_m0 * x0;
        let mut g = DVector::from_column_slice(d0);
        for j in 0..l {
            for i in 0..m {
                g[i] += self.y[(i, j)] * s[(i, j)];
            }
        }
        let mut delta = self.schur.solve(&g);
        let lambda = (m as f64 - delta.sum()) / self.ones_h_inv_ones;
        delta.axpy(lambda, &self.h_inv_ones, 1.0);

        // X = X₀ − M₀ᵀ(S − K⁻¹ diag(δ) Y)
        let mut scaled = self.y.clone();
        for (mut row, di) in scaled.row_iter_mut().zip(delta.iter()) {
            row *= *di;
        }
        let mut e = s;
        e.gemm(-1.0, &self.k_inv, &scaled, 1.0);
        let mut x = x0.clone_owned();
        x.gemm_tr(-1.0, &self.m0, &e, 1.0);

        out[..nl].copy_from_slice(x.as_slice());
        out[nl..].copy_from_slice(delta.as_slice());
    }
}

/// Projector onto `{x : M₀x = y}` for a single column `y`.
#[derive(Debug, Clone)]
pub struct ColumnProjector {
    pub(crate) m0: DMatrix<f64>,
    /// `I − M₀ᵀK⁻¹M₀`
    nullspace: DMatrix<f64>,
    /// `M₀ᵀK⁻¹`
    pinv: DMatrix<f64>,
}

impl ColumnProjector {
    pub fn new(m0: &DMatrix<f64>) -> Result<Self> {
        let k_inv = gram_inverse(m0)?;
        let pinv = m0.transpose() * k_inv;
        let n = m0.ncols();
        let nullspace = DMatrix::identity(n, n) - &pinv * m0;
        Ok(Self {
            m0: m0.clone(),
            nullspace,
            pinv,
        })
    }

    /// Minimum-norm solution `M₀ᵀK⁻¹y`.
    pub fn offset(&self, y: &[f64]) -> DVector<f64> {
        &self.pinv * DVector::from_column_slice(y)
    }

    pub(crate) fn project_into(&self, offset: &DVector<f64>, point: &[f64], out: &mut [f64]) {
        let v = DMatrixView::from_slice(point, point.len(), 1);
        let mut res = offset.clone();
        res.gemv(1.0, &self.nullspace, &v.column(0), 1.0);
        out.copy_from_slice(res.as_slice());
    }
}
