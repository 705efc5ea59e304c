//! Dense two-phase revised simplex for `min cᵀx s.t. Ax = b, x ≥ 0`.
//!
//! The basis inverse is kept explicitly, updated by elementary row
//! operations and rebuilt from the original data every few pivots so that
//! rounding does not accumulate across long degenerate runs. Pricing is
//! Dantzig's rule with a permanent switch to Bland's rule after a run of
//! degenerate pivots; the ratio test is a two-pass Harris test preferring
//! large pivots. The final basis is re-solved with an LU factorization and
//! certified (primal and dual feasibility) before a solution is returned.

use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone)]
pub struct StandardLp {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub c: DVector<f64>,
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub x: DVector<f64>,
    pub objective: f64,
    pub pivots: usize,
}

const PIVOT_TOL: f64 = 1e-9;
const RATIO_TOL: f64 = 1e-9;
const COST_TOL: f64 = 1e-9;
const DEGENERATE_RUN: usize = 50;
const REFACTOR_EVERY: usize = 50;
/// Relative size of the right-hand-side perturbation.
const PERTURBATION: f64 = 1e-7;
const MAX_PIVOTS: usize = 200_000;

#[derive(Clone, Copy, PartialEq)]
enum Phase {
    One,
    Two,
}

struct Revised<'a> {
    lp: &'a StandardLp,
    /// `diag(sign) A`, `diag(sign) b` with `sign` making `b` nonnegative
    a: DMatrix<f64>,
    b: DVector<f64>,
    /// column `j < n` is structural, `n + i` the artificial of row `i`
    basis: Vec<usize>,
    binv: DMatrix<f64>,
    xb: DVector<f64>,
    bland: bool,
    degenerate_run: usize,
    pivots: usize,
    max_pivots: usize,
    since_refactor: usize,
}

impl Revised<'_> {
    fn n(&self) -> usize {
        self.a.ncols()
    }

    fn column(&self, j: usize) -> DVector<f64> {
        if j < self.n() {
            self.a.column(j).clone_owned()
        } else {
            let mut e = DVector::zeros(self.a.nrows());
            e[j - self.n()] = 1.0;
            e
        }
    }

    fn cost(&self, phase: Phase, j: usize) -> f64 {
        match (phase, j < self.n()) {
            (Phase::One, structural) => f64::from(u8::from(!structural)),
            (Phase::Two, true) => self.lp.c[j],
            (Phase::Two, false) => 0.0,
        }
    }

    fn refactor(&mut self) -> Result<()> {
        let r = self.a.nrows();
        let cols: Vec<DVector<f64>> = self.basis.iter().map(|&j| self.column(j)).collect();
        let b = DMatrix::from_columns(&cols);
        self.binv = b
            .try_inverse()
            .ok_or_else(|| Error::Lp("singular basis during refactorization".into()))?;
        debug_assert_eq!(self.binv.nrows(), r);
        self.xb = &self.binv * &self.b;
        self.since_refactor = 0;
        Ok(())
    }

    fn reduced_costs(&self, phase: Phase) -> DVector<f64> {
        let cb = DVector::from_iterator(self.basis.len(), self.basis.iter().map(|&j| self.cost(phase, j)));
        let nu = self.binv.tr_mul(&cb);
        DVector::from_fn(self.n(), |j, _| self.cost(phase, j)) - self.a.tr_mul(&nu)
    }

    fn in_basis(&self) -> Vec<bool> {
        let mut in_basis = vec![false; self.n()];
        for &j in &self.basis {
            if j < self.n() {
                in_basis[j] = true;
            }
        }
        in_basis
    }

    fn entering(&self, phase: Phase) -> Option<usize> {
        let d = self.reduced_costs(phase);
        let in_basis = self.in_basis();
        let scale = 1.0 + self.lp.c.amax();
        let mut candidates = (0..self.n()).filter(|&j| !in_basis[j] && d[j] < -COST_TOL * scale);
        if self.bland {
            candidates.next()
        } else {
            candidates.min_by(|&a, &b| d[a].total_cmp(&d[b]))
        }
    }

    /// Harris ratio test on direction `w = B⁻¹a_q`. In phase two a basic
    /// artificial sits at zero and leaves as soon as the step touches it.
    fn leaving(&self, w: &DVector<f64>, phase: Phase) -> Option<usize> {
        let tol = PIVOT_TOL * (1.0 + w.amax());
        let n = self.n();
        let pinned = |i: usize| phase == Phase::Two && self.basis[i] >= n;
        let eligible = |i: usize| w[i] > tol || (pinned(i) && w[i] < -tol);
        let ratio = |i: usize, pad: f64| {
            if pinned(i) {
                0.0
            } else {
                (self.xb[i].max(0.0) + pad) / w[i]
            }
        };
        let rows = || (0..w.len()).filter(|&i| eligible(i));
        let bound = rows().map(|i| ratio(i, RATIO_TOL)).min_by(f64::total_cmp)?;
        let candidates: Vec<usize> = rows().filter(|&i| ratio(i, 0.0) <= bound).collect();
        let largest = candidates.iter().map(|&i| w[i].abs()).fold(0.0, f64::max);
        if self.bland {
            candidates
                .into_iter()
                .filter(|&i| w[i].abs() >= 1e-2 * largest)
                .min_by_key(|&i| self.basis[i])
        } else {
            candidates.into_iter().max_by(|&a, &b| w[a].abs().total_cmp(&w[b].abs()))
        }
    }

    /// Primal step length for leaving row `p`: zero for a pinned artificial.
    fn primal_step(&self, p: usize, w: &DVector<f64>) -> f64 {
        if self.basis[p] >= self.n() && w[p] < 0.0 {
            0.0
        } else {
            self.xb[p].max(0.0) / w[p]
        }
    }

    fn pivot(&mut self, p: usize, q: usize, w: &DVector<f64>, step: f64) -> Result<()> {
        self.xb.axpy(-step, w, 1.0);
        self.xb[p] = step;
        let row_p: DVector<f64> = self.binv.row(p).transpose() / w[p];
        let mut w_off = w.clone();
        w_off[p] = 0.0;
        self.binv.ger(-1.0, &w_off, &row_p, 1.0);
        self.binv.set_row(p, &row_p.transpose());
        self.basis[p] = q;
        self.pivots += 1;
        self.since_refactor += 1;
        if self.since_refactor >= REFACTOR_EVERY {
            self.refactor()?;
        }
        if self.pivots > self.max_pivots {
            return Err(Error::Lp("pivot limit reached".into()));
        }
        Ok(())
    }

    /// Dual simplex pivots on the current right-hand side until the basic
    /// solution is nonnegative. Reduced costs stay nonnegative throughout.
    fn restore_primal(&mut self) -> Result<()> {
        let n = self.n();
        let tol = 1e-11 * (1.0 + self.b.amax());
        loop {
            let candidates = (0..self.basis.len()).filter(|&i| self.basis[i] < n && self.xb[i] < -tol);
            let Some(p) = candidates.min_by(|&x, &y| self.xb[x].total_cmp(&self.xb[y])) else {
                return Ok(());
            };
            let alpha = self.a.tr_mul(&self.binv.row(p).transpose());
            let d = self.reduced_costs(Phase::Two);
            let in_basis = self.in_basis();
            let scale = 1.0 + alpha.amax();
            let q = (0..n)
                .filter(|&j| !in_basis[j] && alpha[j] < -PIVOT_TOL * scale)
                .min_by(|&x, &y| (d[x].max(0.0) / -alpha[x]).total_cmp(&(d[y].max(0.0) / -alpha[y])))
                .ok_or_else(|| Error::Lp("infeasible (dual ratio test empty)".into()))?;
            let w = &self.binv * self.column(q);
            let step = self.xb[p] / w[p];
            self.pivot(p, q, &w, step)?;
        }
    }

    fn optimize(&mut self, phase: Phase) -> Result<()> {
        self.bland = false;
        self.degenerate_run = 0;
        while let Some(q) = self.entering(phase) {
            let w = &self.binv * self.column(q);
            let Some(p) = self.leaving(&w, phase) else {
                return Err(Error::Lp("unbounded objective".into()));
            };
            if self.xb[p] <= RATIO_TOL {
                self.degenerate_run += 1;
                self.bland |= self.degenerate_run > DEGENERATE_RUN;
            } else {
                self.degenerate_run = 0;
            }
            let step = self.primal_step(p, &w);
            self.pivot(p, q, &w, step)?;
        }
        Ok(())
    }

    /// Swap remaining basic artificials (all at zero) for structural
    /// columns where possible; rows where none qualifies are redundant.
    fn drive_out_artificials(&mut self) -> Result<()> {
        let n = self.n();
        for p in 0..self.basis.len() {
            if self.basis[p] < n {
                continue;
            }
            let row = self.binv.row(p) * &self.a;
            let in_basis = self.in_basis();
            let best = (0..n)
                .filter(|&j| !in_basis[j])
                .max_by(|&x, &y| row[x].abs().total_cmp(&row[y].abs()));
            if let Some(q) = best.filter(|&q| row[q].abs() > 1e-7) {
                let w = &self.binv * self.column(q);
                self.pivot(p, q, &w, 0.0)?;
            }
        }
        Ok(())
    }
}

/// Starting point for [`simplex_from`].
#[derive(Debug, Clone)]
pub struct WarmStart<'h> {
    /// Preferred basic columns, most important first.
    pub hint: &'h [usize],
    /// `mirror[j]` is a column equal to `−A_j`, or `j` itself if there is none.
    pub mirror: &'h [usize],
    pub max_pivots: usize,
}

pub fn simplex(lp: &StandardLp) -> Result<LpSolution> {
    run(lp, None)
}

/// Simplex started from a basis assembled out of `warm.hint`.
///
/// Hinted columns are taken greedily while they stay linearly independent;
/// artificials complete the basis. Negative basic values are repaired by
/// switching to mirror columns and flipping artificial rows, after which the
/// usual two phases run from that basis.
pub fn simplex_from(lp: &StandardLp, warm: &WarmStart<'_>) -> Result<LpSolution> {
    run(lp, Some(warm))
}

fn check_shapes(lp: &StandardLp) -> Result<()> {
    let (r, n) = lp.a.shape();
    if lp.b.len() != r || lp.c.len() != n {
        return Err(Error::shape(
            format!("b of length {r} and c of length {n}"),
            format!("{} and {}", lp.b.len(), lp.c.len()),
        ));
    }
    Ok(())
}

/// Greedy independent subset of `hint` completed by artificials.
fn initial_basis(a: &DMatrix<f64>, hint: &[usize]) -> Vec<usize> {
    let (r, n) = a.shape();
    let mut q: Vec<DVector<f64>> = Vec::with_capacity(r);
    let mut basis = Vec::with_capacity(r);
    let accept = |v: DVector<f64>, q: &mut Vec<DVector<f64>>| -> bool {
        let scale = v.norm();
        if scale == 0.0 {
            return false;
        }
        let mut v = v;
        for _ in 0..2 {
            for e in q.iter() {
                let d = e.dot(&v);
                v.axpy(-d, e, 1.0);
            }
        }
        let rest = v.norm();
        if rest <= 1e-7 * scale {
            return false;
        }
        q.push(v / rest);
        true
    };
    let mut seen = vec![false; n];
    for &j in hint {
        if basis.len() == r {
            break;
        }
        if j < n && !seen[j] {
            seen[j] = true;
            if accept(a.column(j).clone_owned(), &mut q) {
                basis.push(j);
            }
        }
    }
    for i in 0..r {
        if basis.len() == r {
            break;
        }
        let mut e = DVector::zeros(r);
        e[i] = 1.0;
        if accept(e, &mut q) {
            basis.push(n + i);
        }
    }
    basis
}

fn run(lp: &StandardLp, warm: Option<&WarmStart<'_>>) -> Result<LpSolution> {
    check_shapes(lp)?;
    let (r, n) = lp.a.shape();
    let b0 = &lp.b;
    // positive rhs perturbation keeps ratio tests away from ties
    let eps = PERTURBATION * (1.0 + b0.amax());
    let bump = DVector::from_fn(r, |i, _| eps * (1.0 + ((i + 1) as f64 * 0.618_033_988_749_895).fract()));
    let mut sign = DVector::from_fn(r, |i, _| if b0[i] < 0.0 { -1.0 } else { 1.0 });
    let mut basis: Vec<usize> = (n..n + r).collect();

    if let Some(w) = warm {
        basis = initial_basis(&lp.a, w.hint);
        if basis.len() < r {
            return Err(Error::Lp("warm start basis is rank deficient".into()));
        }
        let bmat = DMatrix::from_columns(
            &basis
                .iter()
                .map(|&j| {
                    if j < n {
                        lp.a.column(j).clone_owned()
                    } else {
                        let mut e = DVector::zeros(r);
                        e[j - n] = 1.0;
                        e
                    }
                })
                .collect::<Vec<_>>(),
        );
        let xb = bmat
            .lu()
            .solve(b0)
            .ok_or_else(|| Error::Lp("singular warm start basis".into()))?;
        for (p, j) in basis.iter_mut().enumerate() {
            if xb[p] >= 0.0 {
                continue;
            }
            if *j >= n {
                sign[*j - n] = -1.0;
            } else if w.mirror[*j] != *j {
                *j = w.mirror[*j];
            }
        }
    }

    let mut a = lp.a.clone();
    for i in 0..r {
        a.row_mut(i).scale_mut(sign[i]);
    }
    let b = b0.component_mul(&sign);
    let perturbed = &b + &bump;
    let mut s = Revised {
        lp,
        a,
        xb: perturbed.clone(),
        b: perturbed,
        basis,
        binv: DMatrix::identity(r, r),
        bland: false,
        degenerate_run: 0,
        pivots: 0,
        max_pivots: warm.map_or(MAX_PIVOTS, |w| w.max_pivots),
        since_refactor: 0,
    };
    s.refactor()?;
    if s.xb.iter().any(|v| *v < -10.0 * eps) {
        return Err(Error::Lp("warm start basis is not primal feasible".into()));
    }

    s.optimize(Phase::One)?;
    let exact = &s.binv * &b;
    let infeas: f64 = s
        .basis
        .iter()
        .zip(exact.iter())
        .filter(|(&j, _)| j >= n)
        .map(|(_, v)| v.abs())
        .sum();
    if infeas > 1e-8 * (1.0 + lp.b.amax()) {
        return Err(Error::Lp(format!("infeasible (phase 1 objective {infeas:.3e})")));
    }
    s.drive_out_artificials()?;
    s.refactor()?;
    s.optimize(Phase::Two)?;

    s.b = b;
    s.refactor()?;
    s.restore_primal()?;
    certify(lp, &s.basis, s.pivots)
}

/// Re-solve the final basis from the original data and check optimality.
fn certify(lp: &StandardLp, basis: &[usize], pivots: usize) -> Result<LpSolution> {
    let n = lp.a.ncols();
    // rows still held by an artificial are redundant and dropped
    let cols: Vec<usize> = basis.iter().copied().filter(|&j| j < n).collect();
    let redundant: Vec<usize> = (0..basis.len()).filter(|&i| basis[i] >= n).map(|i| basis[i] - n).collect();
    let keep: Vec<usize> = (0..lp.a.nrows()).filter(|i| !redundant.contains(i)).collect();
    let k = cols.len();
    let basis_m = DMatrix::from_fn(k, k, |r, c| lp.a[(keep[r], cols[c])]);
    let rhs = DVector::from_fn(k, |r, _| lp.b[keep[r]]);
    let lu = basis_m.clone().lu();
    let xb = lu
        .solve(&rhs)
        .ok_or_else(|| Error::Lp("singular final basis".into()))?;
    let cb = DVector::from_fn(k, |r, _| lp.c[cols[r]]);
    let duals = basis_m
        .transpose()
        .lu()
        .solve(&cb)
        .ok_or_else(|| Error::Lp("singular final basis".into()))?;

    let mut x = DVector::zeros(n);
    for (r, &j) in cols.iter().enumerate() {
        x[j] = xb[r];
    }
    let x_scale = 1.0 + x.amax();
    if x.min() < -1e-9 * x_scale {
        return Err(Error::Lp(format!("primal infeasible basis (min {:.3e})", x.min())));
    }
    x.iter_mut().for_each(|v| *v = v.max(0.0));
    let resid = (&lp.a * &x - &lp.b).amax();
    if resid > 1e-9 * (1.0 + lp.b.amax()) * x_scale {
        return Err(Error::Lp(format!("constraint residual {resid:.3e}")));
    }
    let c_scale = 1.0 + lp.c.amax();
    for j in 0..n {
        let col_dot: f64 = keep.iter().zip(duals.iter()).map(|(&i, y)| lp.a[(i, j)] * y).sum();
        let d = lp.c[j] - col_dot;
        if d < -1e-7 * c_scale {
            return Err(Error::Lp(format!("dual infeasible: reduced cost {d:.3e} at {j}")));
        }
    }
    Ok(LpSolution {
        objective: lp.c.dot(&x),
        x,
        pivots,
    })
}
