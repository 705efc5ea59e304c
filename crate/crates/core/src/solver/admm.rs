//! Two-block operator splitting for `min ‖w_pen‖₁ + ι_A(w)`.
//!
//! The stacked variable is split into a leading `ℓ₁`-penalized block and a
//! trailing free block (the inverse gains). Iterates:
//!
//! ```text
//! x ← Π_A(z − u)
//! z ← prox(x + u)      soft threshold 1/ρ on the penalized block, identity elsewhere
//! u ← u + x − z
//! ```
//!
//! `x` always lies exactly on the affine set, so it is the point returned.

use super::prox::soft_threshold_in_place;
use super::polish::PolishTolerances;
use super::SolverConfig;
use std::collections::HashMap;

pub(crate) trait AffineSet {
    fn dim(&self) -> usize;
    /// Number of leading coordinates carrying the `ℓ₁` penalty.
    fn penalized(&self) -> usize;
    fn project(&self, point: &[f64], out: &mut [f64]);
    /// Exact solution on the support of `z`, if it can be certified optimal.
    /// `g` is the subgradient estimate `ρu`.
    fn polish(&self, _z: &[f64], _g: &[f64], _tol: PolishTolerances) -> Option<Vec<f64>> {
        None
    }
    /// Exact solve warm-started from the iterate, tried once at the iteration limit.
    fn crossover(&self, _z: &[f64], _g: &[f64]) -> Option<Vec<f64>> {
        None
    }
}

#[derive(Debug, Clone)]
pub(crate) struct AdmmOutcome {
    pub x: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub monotonicity_violations: usize,
}

/// Residual ratio that triggers a penalty update.
const BALANCE_RATIO: f64 = 10.0;
/// Iterations between penalty updates.
const BALANCE_EVERY: usize = 10;
/// Penalty changes allowed before the interval between them starts doubling.
const BALANCE_FREE_CHANGES: u32 = 2;
/// Iterations between support-stability checks for polishing.
const POLISH_EVERY: usize = 10;
/// Growth allowed in the combined residual before it counts as a violation.
const MONOTONE_SLACK: f64 = 10.0;

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

pub(crate) fn solve<S: AffineSet>(set: &S, start: Vec<f64>, cfg: &SolverConfig) -> AdmmOutcome {
    let n = set.dim();
    let p = set.penalized();
    assert_eq!(start.len(), n);
    let mut rho = cfg.penalty_parameter;
    let mut z = start;
    let mut z_prev = vec![0.0; n];
    let mut u = vec![0.0; n];
    let mut x = vec![0.0; n];
    let mut buf = vec![0.0; n];

    let mut best_combined = f64::INFINITY;
    let mut violations = 0;
    let mut r_norm = f64::INFINITY;
    let mut s_norm = f64::INFINITY;
    let polish_tol = PolishTolerances {
        gap: cfg.dual_tolerance,
        feasibility: cfg.feasibility_tolerance,
    };
    let mut last_support: Vec<bool> = Vec::new();
    // support -> (failed attempts, iteration of the last attempt)
    let mut failed: HashMap<Vec<bool>, (u32, usize)> = HashMap::new();
    // failures across all supports gate the attempts globally too
    let mut total_failed: u32 = 0;
    let mut next_allowed = 0;
    let mut rho_changes: u32 = 0;
    let mut next_balance = 0;

    for it in 1..=cfg.max_iterations {
        for i in 0..n {
            buf[i] = z[i] - u[i];
        }
        set.project(&buf, &mut x);

        z_prev.copy_from_slice(&z);
        let a = cfg.relaxation;
        for i in 0..n {
            // over-relaxed x
            buf[i] = a * x[i] + (1.0 - a) * z_prev[i];
            z[i] = buf[i] + u[i];
        }
        soft_threshold_in_place(&mut z[..p], 1.0 / rho);
        for i in 0..n {
            u[i] += buf[i] - z[i];
        }

        r_norm = dist(&x, &z);
        let dz = dist(&z, &z_prev);
        s_norm = rho * dz;

        let combined = (r_norm * r_norm + dz * dz).sqrt();
        if combined > MONOTONE_SLACK * best_combined {
            violations += 1;
            log::debug!("residual growth at iteration {it}: {combined:.3e} vs {best_combined:.3e}");
        }
        best_combined = best_combined.min(combined);

        let eps_pri = cfg.primal_tolerance * (1.0 + norm(&x).max(norm(&z)));
        let eps_dual = cfg.dual_tolerance * (1.0 + rho * norm(&u));
        if r_norm <= eps_pri && s_norm <= eps_dual {
            return AdmmOutcome {
                x,
                converged: true,
                iterations: it,
                monotonicity_violations: violations,
            };
        }

        if cfg.polish && it % POLISH_EVERY == 0 {
            let supp: Vec<bool> = z[..p].iter().map(|v| *v != 0.0).collect();
            let due = match failed.get(&supp) {
                None => true,
                Some(&(tries, at)) => it >= at + (POLISH_EVERY << tries.min(12)),
            };
            if supp == last_support && due && it >= next_allowed {
                let g: Vec<f64> = u.iter().map(|v| rho * v).collect();
                if let Some(w) = set.polish(&z, &g, polish_tol) {
                    return AdmmOutcome {
                        x: w,
                        converged: true,
                        iterations: it,
                        monotonicity_violations: violations,
                    };
                }
                let entry = failed.entry(supp.clone()).or_insert((0, it));
                entry.0 += 1;
                entry.1 = it;
                total_failed += 1;
                next_allowed = it + (POLISH_EVERY << (total_failed / 2).min(10));
            }
            last_support = supp;
        }

        if cfg.adaptive_penalty && it % BALANCE_EVERY == 0 && it >= next_balance {
            let scale = if r_norm > BALANCE_RATIO * s_norm {
                2.0
            } else if s_norm > BALANCE_RATIO * r_norm {
                0.5
            } else {
                1.0
            };
            if scale != 1.0 {
                rho_changes += 1;
                // repeated changes back off so the penalty cannot cycle forever
                next_balance = it + BALANCE_EVERY * (1 << (rho_changes / BALANCE_FREE_CHANGES).min(16));
                rho *= scale;
                u.iter_mut().for_each(|v| *v /= scale);
                best_combined = f64::INFINITY;
            }
        }
    }

    log::debug!("iteration limit: primal {r_norm:.3e} dual {s_norm:.3e}");
    if cfg.polish {
        let g: Vec<f64> = u.iter().map(|v| rho * v).collect();
        if let Some(w) = set.crossover(&z, &g) {
            return AdmmOutcome {
                x: w,
                converged: true,
                iterations: cfg.max_iterations,
                monotonicity_violations: violations,
            };
        }
    }
    AdmmOutcome {
        x,
        converged: false,
        iterations: cfg.max_iterations,
        monotonicity_violations: violations,
    }
}
