//! Single-budget route: solve the dual cone program
//!
//!   U = sup a'y   s.t.   y_I' Sigma_I^{-1} y_I <= c_I   for every subset I
//!
//! by a log-barrier interior-point method, then read off the weights
//! lambda_I = 2 alpha_I Sigma_I^{-1} y_I and the fractional counts
//! nu_I = (B/c_I) sqrt(c_I lambda_I' Sigma_I lambda_I) / sum_J sqrt(...).
//! The optimal variance satisfies V = U^2 / B.

use super::{finish_plan, scaled_solve, AllocationPlan, AllocatorError, SolverDiagnostics};
use crate::linalg::{dot, Mat};
use crate::model::{CostModel, CovarianceMatrix, TargetSpec};
use crate::num::Real;

/// Dual solution of the single-budget program.
#[derive(Debug, Clone)]
pub struct SocpSolution<T> {
    /// Maximizer of a'y, embedded in full dimension k.
    pub y_star: Vec<T>,
    /// Constraint multipliers alpha_I, one per family subset.
    pub multipliers: Vec<T>,
    /// U = a'y_star.
    pub objective: T,
}

const MAX_OUTER: usize = 60;
const MAX_INNER: usize = 100;
// Stopping at 1e-9 keeps slacks well above f64 cancellation noise in
// c_I - u'Q_I u; pushing further corrupts the recovered multipliers.
const GAP_REL: f64 = 1e-9;

pub fn solve_single_budget<T: Real>(
    sigma: &CovarianceMatrix<T>,
    target: &TargetSpec<T>,
    cm: &CostModel<T>,
) -> Result<(SocpSolution<T>, AllocationPlan<T>), AllocatorError> {
    if cm.m() != 1 {
        return Err(AllocatorError::NotSingleBudget { got: cm.m() });
    }
    let family = cm.family();
    let union: Vec<usize> = family.union_all().into_iter().collect();
    if !target.support().iter().all(|i| union.contains(i)) {
        return Err(AllocatorError::UnreachableTarget);
    }
    let r = union.len();
    let p = family.len();
    let budget = cm.budgets()[0];

    // reduced constraint matrices Q_I = (P_I' Sigma_I^{-1} P_I) on union coords
    let mut q = Vec::with_capacity(p);
    for subset in family.subsets() {
        let emb = sigma
            .embedded_inverse(subset)
            .map_err(|_| AllocatorError::SingularSubmatrix { label: subset.label() })?;
        q.push(Mat::from_fn(r, r, |i, j| emb[(union[i], union[j])]));
    }
    let a_r: Vec<T> = union.iter().map(|&i| target.coefficients()[i]).collect();
    let costs: Vec<T> = (0..p).map(|i| cm.cost(i)[0]).collect();

    let slacks = |u: &[T]| -> Vec<T> {
        (0..p)
            .map(|i| {
                let qu = q[i].matvec(u);
                costs[i] - dot(u, &qu)
            })
            .collect()
    };

    // scale-invariant initial barrier weight from a crude feasible point t*a
    let mut t_feas = T::infinity();
    for i in 0..p {
        let qa = q[i].matvec(&a_r);
        let quad = dot(&a_r, &qa);
        if quad > T::zero() {
            t_feas = t_feas.min((costs[i] / quad).sqrt());
        }
    }
    let a_norm_sq = dot(&a_r, &a_r);
    let u_lower = if t_feas.is_finite() { t_feas * a_norm_sq } else { T::one() };
    let mut mu = u_lower.max(T::of(1e-300));

    let mut u = vec![T::zero(); r]; // strictly feasible: slacks = c_I > 0
    let mut iterations = 0usize;
    let mut kkt = f64::INFINITY;
    let mut stalled = false;
    for _outer in 0..MAX_OUTER {
        // Newton-center f(u) = -a'u - mu * sum log s_I
        for _inner in 0..MAX_INNER {
            iterations += 1;
            let s = slacks(&u);
            let mut grad: Vec<T> = a_r.iter().map(|&x| -x).collect();
            let mut hess = Mat::zeros(r, r);
            for i in 0..p {
                let qu = q[i].matvec(&u);
                let inv_s = T::one() / s[i];
                for j in 0..r {
                    grad[j] += T::of(2.0) * mu * qu[j] * inv_s;
                }
                hess.add_assign_scaled(&q[i], T::of(2.0) * mu * inv_s);
                let w = T::of(4.0) * mu * inv_s * inv_s;
                for a in 0..r {
                    for b in 0..r {
                        hess[(a, b)] += w * qu[a] * qu[b];
                    }
                }
            }
            let rhs: Vec<T> = grad.iter().map(|&g| -g).collect();
            let Some(step) = scaled_solve(&hess, &rhs) else {
                stalled = true;
                break; // at numerical precision for this mu
            };
            let decrement = -dot(&grad, &step);
            kkt = grad.iter().fold(T::zero(), |m, &g| m.max(g.abs())).as_f64();
            // backtrack to strict feasibility plus sufficient decrease
            let f_at = |v: &[T]| -> Option<T> {
                let s = slacks(v);
                if s.iter().any(|&x| x <= T::zero()) {
                    return None;
                }
                let barrier: T = s.iter().map(|&x| x.ln()).sum();
                Some(-dot(&a_r, v) - mu * barrier)
            };
            let f0 = f_at(&u).expect("current iterate is feasible");
            // stop centering once the achievable improvement falls below
            // what the barrier objective can resolve in f64
            let resolution = T::of(1e-13) * (T::one() + f0.abs());
            if decrement <= resolution.max(T::of(1e-10) * mu) {
                break;
            }
            let mut tau = T::one();
            let mut moved = false;
            for _ in 0..60 {
                let trial: Vec<T> =
                    u.iter().zip(&step).map(|(&x, &d)| x + tau * d).collect();
                if let Some(f1) = f_at(&trial) {
                    if f1 <= f0 - T::of(0.25) * tau * decrement {
                        let progress = f0 - f1;
                        u = trial;
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
        let objective = dot(&a_r, &u);
        if stalled || T::of(p as f64) * mu <= T::of(GAP_REL) * objective.abs().max(u_lower) {
            break;
        }
        mu = mu * T::of(0.1);
    }

    let s = slacks(&u);
    let objective = dot(&a_r, &u);
    if !(objective.is_finite()) || s.iter().any(|&x| !(x > T::zero())) {
        return Err(AllocatorError::SolverNotConverged {
            detail: "iterate left the feasible region".into(),
        });
    }
    let multipliers: Vec<T> = s.iter().map(|&x| mu / x).collect();

    // lambda_I = 2 alpha_I Sigma_I^{-1} y_I and the Cauchy-Schwarz split of B
    let mut y_star = vec![T::zero(); sigma.k()];
    for (pos, &i) in union.iter().enumerate() {
        y_star[i] = u[pos];
    }
    let mut weights_norm = Vec::with_capacity(p);
    for (i, subset) in family.subsets().iter().enumerate() {
        let inv = sigma
            .submatrix_inverse(subset)
            .map_err(|_| AllocatorError::SingularSubmatrix { label: subset.label() })?;
        let y_i: Vec<T> = subset.indices().iter().map(|&j| y_star[j]).collect();
        let lam: Vec<T> = inv
            .matvec(&y_i)
            .into_iter()
            .map(|x| T::of(2.0) * multipliers[i] * x)
            .collect();
        // lambda' Sigma_I lambda = 4 alpha^2 y' Sigma^{-1} y
        let sub = sigma.submatrix(subset);
        let quad = dot(&lam, &sub.matvec(&lam));
        weights_norm.push((costs[i] * quad.max(T::zero())).sqrt());
    }
    let total: T = weights_norm.iter().copied().sum();
    if !(total > T::zero()) {
        return Err(AllocatorError::SolverNotConverged {
            detail: "degenerate dual solution with zero weights".into(),
        });
    }
    let nu: Vec<T> = (0..p)
        .map(|i| budget / costs[i] * weights_norm[i] / total)
        .collect();

    // a zeroed subset whose constraint is still active signals a tie
    let nu_max = nu.iter().copied().fold(T::zero(), T::max);
    let possibly_nonunique = (0..p).any(|i| {
        nu[i] < T::of(1e-9) * nu_max && s[i] < T::of(1e-6) * costs[i]
    });

    let diagnostics = SolverDiagnostics { iterations, kkt_residual: kkt, possibly_nonunique };
    let plan = finish_plan(sigma, target, cm, nu, diagnostics)?;
    let socp = SocpSolution { y_star, multipliers, objective };
    Ok((socp, plan))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::SubsetFamily;

    fn fam(k: usize, subsets: &[&[usize]]) -> SubsetFamily {
        SubsetFamily::from_one_based(k, &subsets.iter().map(|s| s.to_vec()).collect::<Vec<_>>())
            .unwrap()
    }

    // Oracle: one-variable calculus. U = |a1| sigma sqrt(c), nu = B/c,
    // V = a1^2 sigma^2 c / B — classical sampling scaled by a1^2.
    #[test]
    fn one_variable_matches_classical() {
        let sigma2: f64 = 2.25;
        let c: f64 = 3.0;
        let b: f64 = 60.0;
        let a1: f64 = 1.5;
        let sigma: CovarianceMatrix<f64> = CovarianceMatrix::new(Mat::from_rows(&[vec![sigma2]])).unwrap();
        let cm = CostModel::new(fam(1, &[&[1]]), vec![vec![c]], vec![b]).unwrap();
        let target = TargetSpec::new(vec![a1]).unwrap();
        let (socp, plan) = solve_single_budget(&sigma, &target, &cm).unwrap();
        let u_oracle = a1 * sigma2.sqrt() * c.sqrt();
        assert!((socp.objective - u_oracle).abs() < 1e-6 * u_oracle);
        assert!((plan.fractional.value(0) - b / c).abs() < 1e-6 * (b / c));
        let v_oracle = a1 * a1 * sigma2 * c / b;
        assert!(
            (plan.predicted_variance_fractional - v_oracle).abs() < 1e-6 * v_oracle
        );
        assert_eq!(plan.rounded.counts(), &[20]);
    }

    #[test]
    fn single_full_subset_takes_entire_budget() {
        let sigma: CovarianceMatrix<f64> = CovarianceMatrix::new(Mat::from_rows(&[
            vec![2.0, 0.3],
            vec![0.3, 1.0],
        ]))
        .unwrap();
        let cm = CostModel::new(fam(2, &[&[1, 2]]), vec![vec![2.0]], vec![50.0]).unwrap();
        let target = TargetSpec::new(vec![1.0, 0.0]).unwrap();
        let (_, plan) = solve_single_budget(&sigma, &target, &cm).unwrap();
        assert!((plan.fractional.value(0) - 25.0).abs() < 1e-6 * 25.0);
        let lam = plan.weights.lambda(0).unwrap();
        assert!((lam[0] - 1.0).abs() < 1e-9 && lam[1].abs() < 1e-9);
        let v_oracle = 2.0 * 2.0 / 50.0;
        assert!((plan.predicted_variance_fractional - v_oracle).abs() < 1e-6 * v_oracle);
    }

    #[test]
    fn independent_proxy_gets_nothing() {
        let sigma: CovarianceMatrix<f64> = CovarianceMatrix::new(Mat::from_rows(&[
            vec![1.0, 0.0],
            vec![0.0, 1.0],
        ]))
        .unwrap();
        let cm = CostModel::new(
            fam(2, &[&[1, 2], &[2]]),
            vec![vec![1.0], vec![0.1]],
            vec![30.0],
        )
        .unwrap();
        let target = TargetSpec::new(vec![1.0, 0.0]).unwrap();
        let (_, plan) = solve_single_budget(&sigma, &target, &cm).unwrap();
        assert_eq!(plan.fractional.value(1), 0.0);
        assert!((plan.fractional.value(0) - 30.0).abs() < 1e-5 * 30.0);
    }

    #[test]
    fn dual_identity_on_a_correlated_instance() {
        let sigma: CovarianceMatrix<f64> = CovarianceMatrix::new(Mat::from_rows(&[
            vec![1.0, 0.8],
            vec![0.8, 1.0],
        ]))
        .unwrap();
        let cm = CostModel::new(
            fam(2, &[&[1, 2], &[2]]),
            vec![vec![1.0], vec![0.05]],
            vec![10.0],
        )
        .unwrap();
        let target = TargetSpec::new(vec![1.0, 0.0]).unwrap();
        let (socp, plan) = solve_single_budget(&sigma, &target, &cm).unwrap();
        let v = plan.predicted_variance_fractional;
        let u2 = socp.objective * socp.objective;
        assert!((v * 10.0 - u2).abs() <= 1e-6 * u2, "V*B={} U^2={}", v * 10.0, u2);
        // correlated proxy must receive some budget
        assert!(plan.fractional.value(1) > 0.0);
        // dual feasibility and complementary slackness
        for (i, subset) in cm.family().subsets().iter().enumerate() {
            let inv = sigma.submatrix_inverse(subset).unwrap();
            let y_i: Vec<f64> =
                subset.indices().iter().map(|&j| socp.y_star[j]).collect();
            let quad = dot(&y_i, &inv.matvec(&y_i));
            let c = cm.cost(i)[0];
            assert!(quad <= c + 1e-8);
            assert!(socp.multipliers[i] * (c - quad) <= 1e-6);
        }
    }

    #[test]
    fn unreachable_support_is_reported() {
        let sigma: CovarianceMatrix<f64> = CovarianceMatrix::new(Mat::from_rows(&[
            vec![1.0, 0.2],
            vec![0.2, 1.0],
        ]))
        .unwrap();
        let cm = CostModel::new(fam(2, &[&[2]]), vec![vec![1.0]], vec![10.0]).unwrap();
        let target = TargetSpec::new(vec![1.0, 0.0]).unwrap();
        assert!(matches!(
            solve_single_budget(&sigma, &target, &cm),
            Err(AllocatorError::UnreachableTarget)
        ));
    }

    #[test]
    fn multi_row_cost_model_is_rejected() {
        let sigma: CovarianceMatrix<f64> = CovarianceMatrix::new(Mat::from_rows(&[vec![1.0]])).unwrap();
        let cm = CostModel::new(
            fam(1, &[&[1]]),
            vec![vec![1.0, 1.0]],
            vec![10.0, 10.0],
        )
        .unwrap();
        let target = TargetSpec::new(vec![1.0]).unwrap();
        assert!(matches!(
            solve_single_budget(&sigma, &target, &cm),
            Err(AllocatorError::NotSingleBudget { got: 2 })
        ));
    }
}
