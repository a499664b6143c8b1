//! General route: minimize the convex objective a'M(nu)^{-1}a over
//! fractional counts nu >= 0 subject to the linear budget rows C nu <= B,
//! by a log-barrier interior-point method with Newton inner steps.
//!
//! With an interior start (all nu_I > 0) the reduced information matrix
//! stays positive definite throughout, so no pseudo-inverse rank decisions
//! happen mid-iteration; tiny counts are truncated only at extraction.

use super::{finish_plan, AllocationPlan, AllocatorError, SolverDiagnostics};
use crate::linalg::{dot, lu_inverse, lu_solve, Mat};
use crate::model::{CostModel, CovarianceMatrix, TargetSpec};
use crate::num::Real;

const MAX_OUTER: usize = 60;
const MAX_INNER: usize = 200;
// Tight gap: allocations spanning many orders of magnitude (a tiny money
// budget next to a large labeled cap) need the barrier pushed this far to
// resolve near-zero counts. The Jacobi-scaled Newton solve plus the stall
// path below keep the iteration safe when f64 precision runs out first.
const GAP_REL: f64 = 1e-13;

use super::scaled_solve;

pub fn solve_multi_budget<T: Real>(
    sigma: &CovarianceMatrix<T>,
    target: &TargetSpec<T>,
    cm: &CostModel<T>,
) -> Result<AllocationPlan<T>, AllocatorError> {
    let family = cm.family();
    let union: Vec<usize> = family.union_all().into_iter().collect();
    if !target.support().iter().all(|i| union.contains(i)) {
        return Err(AllocatorError::Infeasible);
    }
    let r = union.len();
    let p = family.len();
    let m = cm.m();

    let mut q = Vec::with_capacity(p);
    for subset in family.subsets() {
        let emb = sigma
            .embedded_inverse(subset)
            .map_err(|_| AllocatorError::SingularSubmatrix { label: subset.label() })?;
        q.push(Mat::from_fn(r, r, |i, j| emb[(union[i], union[j])]));
    }
    let a_r: Vec<T> = union.iter().map(|&i| target.coefficients()[i]).collect();

    // interior start: equal counts spending half of the tightest budget row
    let mut t0 = T::infinity();
    for (l, &b) in cm.budgets().iter().enumerate() {
        let row_total: T = (0..p).map(|i| cm.cost(i)[l]).sum();
        if row_total > T::zero() {
            t0 = t0.min(b / row_total);
        }
    }
    debug_assert!(t0.is_finite(), "every subset has positive cost somewhere");
    let mut nu = vec![T::of(0.5) * t0; p];

    let info = |nu: &[T]| -> Mat<T> {
        let mut m = Mat::zeros(r, r);
        for i in 0..p {
            m.add_assign_scaled(&q[i], nu[i]);
        }
        m
    };
    let slacks = |nu: &[T]| -> Vec<T> {
        (0..m)
            .map(|l| {
                let spent: T = (0..p).map(|i| nu[i] * cm.cost(i)[l]).sum();
                cm.budgets()[l] - spent
            })
            .collect()
    };
    let objective = |nu: &[T]| -> Option<T> {
        let w = lu_solve(&info(nu), &a_r)?;
        Some(dot(&a_r, &w))
    };

    let f0 = objective(&nu).ok_or_else(|| AllocatorError::SolverNotConverged {
        detail: "information matrix singular at the interior start".into(),
    })?;
    let n_constraints = T::of((p + m) as f64);
    let mut mu = f0.max(T::of(1e-300)) / n_constraints;

    let mut iterations = 0usize;
    let mut kkt = f64::INFINITY;
    let mut stalled = false;
    for _outer in 0..MAX_OUTER {
        for _inner in 0..MAX_INNER {
            iterations += 1;
            let minv = lu_inverse(&info(&nu)).ok_or_else(|| {
                AllocatorError::SolverNotConverged { detail: "singular iterate".into() }
            })?;
            let w = minv.matvec(&a_r);
            let s = slacks(&nu);
            let u: Vec<Vec<T>> = (0..p).map(|i| q[i].matvec(&w)).collect();
            let mut grad = vec![T::zero(); p];
            let mut hess = Mat::zeros(p, p);
            for i in 0..p {
                grad[i] = -dot(&w, &u[i]) - mu / nu[i];
                for l in 0..m {
                    grad[i] += mu * cm.cost(i)[l] / s[l];
                }
                let minv_ui = minv.matvec(&u[i]);
                for j in 0..p {
                    hess[(i, j)] = T::of(2.0) * dot(&minv_ui, &u[j]);
                    for l in 0..m {
                        hess[(i, j)] += mu * cm.cost(i)[l] * cm.cost(j)[l] / (s[l] * s[l]);
                    }
                }
                hess[(i, i)] += mu / (nu[i] * nu[i]);
            }
            let rhs: Vec<T> = grad.iter().map(|&g| -g).collect();
            let Some(step) = scaled_solve(&hess, &rhs) else {
                stalled = true;
                break; // at numerical precision for this mu
            };
            let decrement = -dot(&grad, &step);
            kkt = grad.iter().fold(T::zero(), |a, &g| a.max(g.abs())).as_f64();
            let phi = |nu: &[T]| -> Option<T> {
                if nu.iter().any(|&x| x <= T::zero()) {
                    return None;
                }
                let s = slacks(nu);
                if s.iter().any(|&x| x <= T::zero()) {
                    return None;
                }
                let f = objective(nu)?;
                let barrier: T = nu.iter().map(|&x| x.ln()).sum::<T>()
                    + s.iter().map(|&x| x.ln()).sum::<T>();
                Some(f - mu * barrier)
            };
            let phi0 = phi(&nu).expect("current iterate is interior");
            // stop centering once the achievable improvement falls below
            // what phi can resolve in f64
            let resolution = T::of(1e-13) * (T::one() + phi0.abs());
            if decrement <= resolution.max(T::of(1e-10) * mu) {
                break;
            }
            let mut tau = T::one();
            let mut moved = false;
            for _ in 0..60 {
                let trial: Vec<T> =
                    nu.iter().zip(&step).map(|(&x, &d)| x + tau * d).collect();
                if let Some(phi1) = phi(&trial) {
                    if phi1 <= phi0 - T::of(0.25) * tau * decrement {
                        let progress = phi0 - phi1;
                        nu = trial;
                        moved = progress > resolution;
                        break;
                    }
                }
                tau = tau * T::of(0.5);
            }
            if !moved {
                break; // at numerical precision for this mu
            }
        }
        let f = objective(&nu).ok_or_else(|| AllocatorError::SolverNotConverged {
            detail: "singular iterate".into(),
        })?;
        if stalled || n_constraints * mu <= T::of(GAP_REL) * f {
            break;
        }
        mu = mu * T::of(0.1);
    }

    // a zeroed subset whose reduced cost vanishes ties the active support
    let minv = lu_inverse(&info(&nu))
        .ok_or_else(|| AllocatorError::SolverNotConverged { detail: "singular iterate".into() })?;
    let w = minv.matvec(&a_r);
    let s = slacks(&nu);
    let g_scale = (0..p)
        .map(|i| dot(&w, &q[i].matvec(&w)))
        .fold(T::zero(), T::max);
    let nu_max = nu.iter().copied().fold(T::zero(), T::max);
    let possibly_nonunique = (0..p).any(|i| {
        if nu[i] >= T::of(1e-9) * nu_max {
            return false;
        }
        let mut reduced = -dot(&w, &q[i].matvec(&w));
        for l in 0..m {
            reduced += mu / s[l] * cm.cost(i)[l];
        }
        reduced.abs() <= T::of(1e-8) * g_scale
    });

    let diagnostics = SolverDiagnostics { iterations, kkt_residual: kkt, possibly_nonunique };
    finish_plan(sigma, target, cm, nu, diagnostics)
}
