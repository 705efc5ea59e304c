//! Active-set polishing with an optimality certificate.
//!
//! Once the soft-thresholded iterate has a stable support `S`, the program
//! restricted to `S` is a square or overdetermined linear system. Solving it
//! gives a candidate `w`; a dual vector `λ` with `A_Sᵀλ = (sign x_S, 0)` and
//! `|A_offᵀλ| ≤ 1 + ε` then proves `w` optimal up to a relative objective
//! gap of `ε` (since `‖x‖₁ = bᵀλ` and `λ/(1+ε)` is dual feasible).
//!
//! `λ` is taken as the correction of the splitting's dual estimate that
//! satisfies the support equalities with minimal change.
//!
//! Small true entries are often still thresholded to zero when the rest of
//! the support has settled, so candidate supports are widened with indices
//! whose subgradient estimate is within `τ` of ±1.
//!
//! Single-column basis pursuit goes further and finishes with simplex
//! pivots from the suggested basis, which handles near-dense optima whose
//! support the splitting iterate resolves only slowly.

use super::lp::{simplex_from, WarmStart};
use super::oracle::standard_form;
use super::projection::{AffineProjector, ColumnProjector};
use super::Mode;
use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

/// Tolerance on the support equalities of the certificate.
const EQUALITY_TOL: f64 = 1e-8;
/// Smallest accepted squared pivot ratio of the restricted Gram matrix.
const PIVOT_RATIO: f64 = 1e-12;
/// Widening margins for near-active indices; 0 means the bare support.
const WIDEN: [f64; 3] = [0.0, 1e-3, 1e-2];
/// Entries below this fraction of the largest one are dropped after a widened solve.
const PRUNE: f64 = 1e-9;
/// Pivot budget of the calibrated crossover, per constraint row.
const CALIBRATED_PIVOTS_PER_ROW: usize = 4;
/// Pivot budget of the column crossover.
const CROSSOVER_PIVOTS: usize = 400;
/// Smallest accepted pivot element in the ratio test.
const PIVOT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy)]
pub(crate) struct PolishTolerances {
    /// Allowed dual infeasibility, i.e. the relative objective gap.
    pub gap: f64,
    /// Relative feasibility required of the polished point.
    pub feasibility: f64,
}

fn factor(g: DMatrix<f64>) -> Option<Cholesky<f64, Dyn>> {
    let chol = Cholesky::new(g)?;
    let d = chol.l_dirty().diagonal();
    if d.is_empty() {
        return Some(chol);
    }
    ((d.min() / d.max()).powi(2) > PIVOT_RATIO).then_some(chol)
}

fn widened(z: &[f64], g: &[f64], tau: f64) -> Vec<usize> {
    (0..z.len())
        .filter(|&j| z[j] != 0.0 || (tau > 0.0 && g[j].abs() >= 1.0 - tau))
        .collect()
}

/// Exactly `size` indices: the largest `|z|`, topped up by largest `|g|`.
fn filled(z: &[f64], g: &[f64], size: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..z.len()).collect();
    order.sort_by(|&a, &b| {
        (z[b] != 0.0)
            .cmp(&(z[a] != 0.0))
            .then(z[b].abs().total_cmp(&z[a].abs()))
            .then(g[b].abs().total_cmp(&g[a].abs()))
    });
    order.truncate(size);
    order.sort_unstable();
    order
}

/// Basis pursuit column: `min ‖x‖₁ s.t. M₀x = y`.
///
/// Crossover: the support of `z`, topped up to `m` indices by largest
/// `|g|`, seeds a basis of signed columns `±M₀ⱼ`; revised simplex pivots
/// then run until the reduced costs certify optimality. From a settled
/// splitting iterate this takes a handful of pivots.
pub(crate) fn polish_column(
    p: &ColumnProjector,
    y: &[f64],
    z: &[f64],
    g: &[f64],
    tol: PolishTolerances,
) -> Option<Vec<f64>> {
    let m0 = &p.m0;
    let (m, n) = m0.shape();
    let y = DVector::from_column_slice(y);
    let s = filled(z, g, m);
    let lu = m0.select_columns(&s).lu();
    let xs = lu.solve(&y)?;
    // signed variable q < n means +M₀_q, q >= n means −M₀_{q−n}
    let mut basis: Vec<usize> = s
        .iter()
        .zip(xs.iter())
        .map(|(&j, v)| if *v >= 0.0 { j } else { j + n })
        .collect();
    let signed = |q: usize| -> DVector<f64> {
        if q < n {
            m0.column(q).clone_owned()
        } else {
            -m0.column(q - n)
        }
    };
    let refactor = |basis: &[usize]| -> Option<DMatrix<f64>> {
        let b = DMatrix::from_columns(&basis.iter().map(|&q| signed(q)).collect::<Vec<_>>());
        let inv = b.clone().try_inverse()?;
        let check = (&inv * &b - DMatrix::identity(m, m)).amax();
        (check < 1e-8).then_some(inv)
    };
    let mut binv = refactor(&basis)?;
    let mut xb = &binv * &y;
    let ones = DVector::from_element(m, 1.0);
    let mut bland = false;
    let mut degenerate = 0;

    for pivot in 0..CROSSOVER_PIVOTS {
        let nu = binv.tr_mul(&ones);
        let h = m0.tr_mul(&nu);
        let mut entering: Option<(usize, f64)> = None;
        for q in 0..2 * n {
            let rc = if q < n { 1.0 - h[q] } else { 1.0 + h[q - n] };
            if rc < -tol.gap && !basis.contains(&q) {
                let better = match entering {
                    None => true,
                    Some((_, best)) => !bland && rc < best,
                };
                if better {
                    entering = Some((q, rc));
                }
            }
        }
        let Some((q, _)) = entering else {
            return finish_column(m0, &y, &basis, tol);
        };
        let d = &binv * signed(q);
        let mut leave: Option<(usize, f64)> = None;
        for i in 0..m {
            if d[i] > PIVOT_TOL {
                let ratio = xb[i].max(0.0) / d[i];
                let better = match leave {
                    None => true,
                    Some((r, best)) => ratio < best - 1e-14 || (ratio <= best + 1e-14 && basis[i] < basis[r]),
                };
                if better {
                    leave = Some((i, ratio));
                }
            }
        }
        let (r, step) = leave?;
        if step <= PIVOT_TOL {
            degenerate += 1;
            bland |= degenerate > 20;
        } else {
            degenerate = 0;
        }
        let dr = d[r];
        let row_r = binv.row(r) / dr;
        let xr = xb[r] / dr;
        for i in 0..m {
            if i != r && d[i] != 0.0 {
                let f = d[i];
                let updated = binv.row(i) - &row_r * f;
                binv.set_row(i, &updated);
                xb[i] -= f * xr;
            }
        }
        binv.set_row(r, &row_r);
        xb[r] = xr;
        basis[r] = q;
        if (pivot + 1) % 32 == 0 {
            binv = refactor(&basis)?;
            xb = &binv * &y;
        }
    }
    None
}

/// Recompute the final basic solution from scratch and re-check both certificates.
fn finish_column(m0: &DMatrix<f64>, y: &DVector<f64>, basis: &[usize], tol: PolishTolerances) -> Option<Vec<f64>> {
    let n = m0.ncols();
    let cols: Vec<usize> = basis.iter().map(|&q| q % n).collect();
    let signs: Vec<f64> = basis.iter().map(|&q| if q < n { 1.0 } else { -1.0 }).collect();
    let sub = m0.select_columns(&cols);
    let lu = sub.clone().lu();
    let xs = lu.solve(y)?;
    let mut out = vec![0.0; n];
    for (a, &j) in cols.iter().enumerate() {
        if xs[a] * signs[a] < -1e-9 * (1.0 + xs.amax()) {
            return None;
        }
        out[j] = xs[a];
    }
    if (&sub * &xs - y).norm() > tol.feasibility * (1.0 + y.norm()) {
        return None;
    }
    let nu = sub.transpose().lu().solve(&DVector::from_column_slice(&signs))?;
    let h = m0.tr_mul(&nu);
    h.iter().all(|v| v.abs() <= 1.0 + tol.gap).then_some(out)
}

/// Calibrated program on the stacked variable `(vec X, δ)`.
pub(crate) fn polish_calibrated(
    p: &AffineProjector,
    z: &[f64],
    g: &[f64],
    tol: PolishTolerances,
) -> Option<Vec<f64>> {
    let (n, l) = (p.n(), p.l());
    let mut tried: Vec<Vec<Vec<usize>>> = Vec::new();
    for tau in WIDEN {
        let supports: Vec<Vec<usize>> = (0..l)
            .map(|c| widened(&z[c * n..(c + 1) * n], &g[c * n..(c + 1) * n], tau))
            .collect();
        if tried.contains(&supports) {
            continue;
        }
        let out = certify_calibrated(p, &supports, g, tol, true);
        tried.push(supports);
        if out.is_some() {
            return out;
        }
    }
    None
}

fn certify_calibrated(
    p: &AffineProjector,
    supports: &[Vec<usize>],
    g: &[f64],
    tol: PolishTolerances,
    allow_prune: bool,
) -> Option<Vec<f64>> {
    let (n, m, l) = (p.n(), p.m(), p.l());
    let (m0, y) = (&p.m0, &p.y);
    let ns: usize = supports.iter().map(Vec::len).sum();
    let dim = ns + m;
    if dim > m * l + 1 {
        return None;
    }
    let subs: Vec<DMatrix<f64>> = supports.iter().map(|s| m0.select_columns(s)).collect();
    let mut offsets = Vec::with_capacity(l);
    let mut acc = 0;
    for s in supports {
        offsets.push(acc);
        acc += s.len();
    }

    // Gram matrix of the restricted constraint matrix A_S
    let mut gram = DMatrix::zeros(dim, dim);
    for c in 0..l {
        let (o, sub) = (offsets[c], &subs[c]);
        let k = sub.ncols();
        gram.view_mut((o, o), (k, k)).copy_from(&(sub.transpose() * sub));
        for a in 0..k {
            for i in 0..m {
                let v = -sub[(i, a)] * y[(i, c)];
                gram[(o + a, ns + i)] = v;
                gram[(ns + i, o + a)] = v;
            }
        }
    }
    gram.view_mut((ns, ns), (m, m)).fill(1.0);
    for i in 0..m {
        gram[(ns + i, ns + i)] += y.row(i).norm_squared();
    }
    let chol = factor(gram)?;

    // primal: least squares on A_S w = (0, …, 0, m)
    let mut rhs = DVector::zeros(dim);
    rhs.rows_mut(ns, m).fill(m as f64);
    let w = chol.solve(&rhs);
    if allow_prune {
        let flat: Vec<(usize, usize)> = supports
            .iter()
            .enumerate()
            .flat_map(|(c, s)| s.iter().map(move |&j| (c, j)))
            .collect();
        let top = w.rows(0, ns).amax();
        if w.rows(0, ns).iter().any(|v| v.abs() <= PRUNE * top) {
            let mut keep = vec![Vec::new(); l];
            for (idx, &(c, j)) in flat.iter().enumerate() {
                if w[idx].abs() > PRUNE * top {
                    keep[c].push(j);
                }
            }
            return certify_calibrated(p, &keep, g, tol, false);
        }
    }
    let delta = w.rows(ns, m).clone_owned();
    let mut res2 = 0.0;
    for c in 0..l {
        let xs = w.rows(offsets[c], subs[c].ncols());
        let mut r = &subs[c] * xs;
        for i in 0..m {
            r[i] -= y[(i, c)] * delta[i];
        }
        res2 += r.norm_squared();
    }
    let resid = res2.sqrt() / (1.0 + y.norm());
    let trace = (delta.sum() - m as f64).abs() / m as f64;
    if resid > tol.feasibility || trace > tol.feasibility || w.rows(0, ns).iter().any(|v| *v == 0.0) {
        return None;
    }

    // dual: correct the estimate ν_a = K⁻¹M₀G so that A_Sᵀλ = (sign x_S, 0)
    let g_x = DMatrix::from_column_slice(n, l, &g[..n * l]);
    let mut nu = &p.k_inv_m0 * g_x;
    let mut mu = 0.0;
    let mut r = DVector::zeros(dim);
    for c in 0..l {
        let o = offsets[c];
        let h = subs[c].transpose() * nu.column(c);
        for a in 0..subs[c].ncols() {
            r[o + a] = w[o + a].signum() - h[a];
        }
    }
    for i in 0..m {
        let s: f64 = (0..l).map(|c| y[(i, c)] * nu[(i, c)]).sum();
        r[ns + i] = s - mu;
    }
    let t = chol.solve(&r);
    let t_delta = t.rows(ns, m);
    for c in 0..l {
        let mut col = &subs[c] * t.rows(offsets[c], subs[c].ncols());
        for i in 0..m {
            col[i] -= y[(i, c)] * t_delta[i];
        }
        nu.column_mut(c).axpy(1.0, &col, 1.0);
    }
    mu += t_delta.sum();

    let h = m0.transpose() * &nu;
    let mut out = vec![0.0; n * l + m];
    for c in 0..l {
        for (a, &j) in supports[c].iter().enumerate() {
            out[c * n + j] = w[offsets[c] + a];
        }
        for j in 0..n {
            let v = out[c * n + j];
            let ok = if v != 0.0 {
                (h[(j, c)] - v.signum()).abs() <= EQUALITY_TOL
            } else {
                h[(j, c)].abs() <= 1.0 + tol.gap
            };
            if !ok {
                return None;
            }
        }
    }
    let scale = 1.0 + nu.amax() * y.amax();
    for i in 0..m {
        let s: f64 = (0..l).map(|c| y[(i, c)] * nu[(i, c)]).sum();
        if (s - mu).abs() > EQUALITY_TOL * scale {
            return None;
        }
    }
    out[n * l..].copy_from_slice(delta.as_slice());
    Some(out)
}

/// Calibrated program solved exactly by simplex from the basis suggested by
/// the iterate: the support of `z` and the gains first, then the remaining
/// entries by decreasing `|g|`. Columns of the standard form are
/// `P, Q, δ⁺, δ⁻`.
pub(crate) fn crossover_calibrated(p: &AffineProjector, z: &[f64], g: &[f64]) -> Option<Vec<f64>> {
    let (n, m, l) = (p.n(), p.m(), p.l());
    let nl = n * l;
    let lp = standard_form(&p.y, &p.m0, Mode::Calibrated);
    let signed = |j: usize, v: f64| if v >= 0.0 { j } else { j + nl };
    let mut support: Vec<usize> = (0..nl).filter(|&j| z[j] != 0.0).collect();
    support.sort_by(|&a, &b| z[b].abs().total_cmp(&z[a].abs()));
    let mut rest: Vec<usize> = (0..nl).filter(|&j| z[j] == 0.0).collect();
    rest.sort_by(|&a, &b| g[b].abs().total_cmp(&g[a].abs()));
    let hint: Vec<usize> = (0..m)
        .map(|i| if z[nl + i] >= 0.0 { 2 * nl + i } else { 2 * nl + m + i })
        .chain(support.iter().map(|&j| signed(j, z[j])))
        .chain(rest.iter().map(|&j| signed(j, g[j])))
        .collect();
    let mirror: Vec<usize> = (0..2 * nl + 2 * m)
        .map(|j| match j {
            j if j < nl => j + nl,
            j if j < 2 * nl => j - nl,
            j if j < 2 * nl + m => j + m,
            j => j - m,
        })
        .collect();
    let warm = WarmStart {
        hint: &hint,
        mirror: &mirror,
        max_pivots: CALIBRATED_PIVOTS_PER_ROW * lp.a.nrows(),
    };
    let sol = match simplex_from(&lp, &warm) {
        Ok(sol) => sol,
        Err(e) => {
            log::debug!("calibrated crossover failed: {e}");
            return None;
        }
    };
    let x = &sol.x;
    let mut out = vec![0.0; nl + m];
    for j in 0..nl {
        out[j] = x[j] - x[nl + j];
    }
    for i in 0..m {
        out[nl + i] = x[2 * nl + i] - x[2 * nl + m + i];
    }
    Some(out)
}
