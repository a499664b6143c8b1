//! The allocation optimizer: given a covariance matrix, a target functional
//! and a cost model, find the variance-minimizing sampling plan and the
//! unbiased weights it induces.
//!
//! Two routes exist: a dual second-order-cone solve for a single budget row,
//! and a barrier-Newton solve of the general multi-budget program. Both
//! return an [`AllocationPlan`].

mod multi;
mod socp;

pub use multi::solve_multi_budget;
pub use socp::{solve_single_budget, SocpSolution};

use crate::linalg::{dot, pinv_sym, Mat};
use crate::model::{
    support_union, Allocation, CostModel, CovarianceMatrix, FractionalAllocation, ModelError,
    Subset, SubsetFamily, TargetSpec, WeightScheme,
};
use crate::num::Real;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use thiserror::Error;

/// Relative eigenvalue cutoff used by every pseudo-inverse in this module.
pub const PINV_CUTOFF_REL: f64 = 1e-12;

/// Relative threshold below which a fractional count is truncated to zero.
pub const TRUNCATION_REL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum AllocatorError {
    #[error("covariance submatrix on {label} is numerically singular")]
    SingularSubmatrix { label: String },
    #[error("target support is not covered by the sampled subsets")]
    UnreachableTarget,
    #[error("no affordable subset mix covers the target support")]
    Infeasible,
    #[error("solver did not converge: {detail}")]
    SolverNotConverged { detail: String },
    #[error("flooring lost target support and no budget-feasible repair exists")]
    SupportLostAfterRounding,
    #[error("no model subsets supplied")]
    NoModelSubsets,
    #[error("single-budget route requires exactly one budget row, got {got}")]
    NotSingleBudget { got: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Solver run statistics attached to every plan.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolverDiagnostics {
    pub iterations: usize,
    pub kkt_residual: f64,
    /// Set when a zeroed subset ties the active ones within tolerance,
    /// hinting that the continuous minimizer may not be unique.
    pub possibly_nonunique: bool,
}

/// The full output of an allocation solve.
#[derive(Debug, Clone)]
pub struct AllocationPlan<T> {
    pub fractional: FractionalAllocation<T>,
    pub rounded: Allocation,
    /// Weights recomputed for the rounded counts.
    pub weights: WeightScheme<T>,
    pub predicted_variance_fractional: T,
    pub predicted_variance_rounded: T,
    /// Realized cost of the rounded plan per budget row.
    pub spend: Vec<T>,
    pub diagnostics: SolverDiagnostics,
}

/// `M(n) = sum_I n_I P_I' Sigma_I^{-1} P_I`, the matrix whose pseudo-inverse
/// is the estimator covariance `S(n)`.
pub fn information_matrix<T: Real>(
    sigma: &CovarianceMatrix<T>,
    family: &SubsetFamily,
    alloc: &FractionalAllocation<T>,
) -> Result<Mat<T>, AllocatorError> {
    if alloc.len() != family.len() {
        return Err(ModelError::UnknownSubset { expected: family.len(), got: alloc.len() }.into());
    }
    let k = sigma.k();
    let mut m = Mat::zeros(k, k);
    for (i, &n) in alloc.values().iter().enumerate() {
        if n <= T::zero() {
            continue;
        }
        let subset = family.subset(i);
        let emb = sigma
            .embedded_inverse(subset)
            .map_err(|_| AllocatorError::SingularSubmatrix { label: subset.label() })?;
        m.add_assign_scaled(&emb, n);
    }
    Ok(m)
}

fn check_support_covered<T: Real>(
    family: &SubsetFamily,
    target: &TargetSpec<T>,
    alloc: &FractionalAllocation<T>,
) -> Result<(), AllocatorError> {
    let union = support_union(alloc, family)?;
    if target.support().iter().all(|i| union.contains(i)) {
        Ok(())
    } else {
        Err(AllocatorError::UnreachableTarget)
    }
}

/// `a' S(n) a = a' M(n)^+ a`, the minimal estimator variance attainable with
/// allocation `alloc`.
pub fn allocation_variance<T: Real>(
    sigma: &CovarianceMatrix<T>,
    target: &TargetSpec<T>,
    family: &SubsetFamily,
    alloc: &FractionalAllocation<T>,
) -> Result<T, AllocatorError> {
    check_support_covered(family, target, alloc)?;
    let m = information_matrix(sigma, family, alloc)?;
    let pinv = pinv_sym(&m, T::of(PINV_CUTOFF_REL));
    let ma = pinv.matvec(target.coefficients());
    Ok(dot(target.coefficients(), &ma))
}

/// Optimal weights `lambda_I = n_I Sigma_I^{-1} P_I M(n)^+ a` for the given
/// allocation; `None` entries mark subsets with a zero count.
pub fn optimal_weights<T: Real>(
    sigma: &CovarianceMatrix<T>,
    target: &TargetSpec<T>,
    family: &SubsetFamily,
    alloc: &FractionalAllocation<T>,
) -> Result<WeightScheme<T>, AllocatorError> {
    check_support_covered(family, target, alloc)?;
    let m = information_matrix(sigma, family, alloc)?;
    let pinv = pinv_sym(&m, T::of(PINV_CUTOFF_REL));
    let w = pinv.matvec(target.coefficients());
    let mut lambdas = Vec::with_capacity(family.len());
    for (i, &n) in alloc.values().iter().enumerate() {
        if n <= T::zero() {
            lambdas.push(None);
            continue;
        }
        let subset = family.subset(i);
        let inv = sigma
            .submatrix_inverse(subset)
            .map_err(|_| AllocatorError::SingularSubmatrix { label: subset.label() })?;
        let w_i: Vec<T> = subset.indices().iter().map(|&j| w[j]).collect();
        let lam: Vec<T> = inv.matvec(&w_i).into_iter().map(|x| n * x).collect();
        lambdas.push(Some(lam));
    }
    Ok(WeightScheme::new(lambdas))
}

/// Floor a fractional allocation, repairing lost target support by raising
/// the cheapest floored-to-zero covering subset to one when affordable.
pub fn round_allocation<T: Real>(
    frac: &FractionalAllocation<T>,
    cm: &CostModel<T>,
    target: &TargetSpec<T>,
) -> Result<Allocation, AllocatorError> {
    let family = cm.family();
    if frac.len() != family.len() {
        return Err(ModelError::UnknownSubset { expected: family.len(), got: frac.len() }.into());
    }
    let mut counts: Vec<u64> = frac.floor().counts().to_vec();
    loop {
        let covered: BTreeSet<usize> = counts
            .iter()
            .enumerate()
            .filter(|(_, &n)| n > 0)
            .flat_map(|(i, _)| family.subset(i).indices().iter().copied())
            .collect();
        let missing: Vec<usize> = target
            .support()
            .into_iter()
            .filter(|i| !covered.contains(i))
            .collect();
        if missing.is_empty() {
            return Ok(Allocation::new(counts));
        }
        // candidate repairs: floored-to-zero subsets covering a missing index,
        // still affordable when raised to one
        let mut best: Option<(T, &Subset, usize)> = None;
        for (i, &n) in counts.iter().enumerate() {
            if n > 0 {
                continue;
            }
            let subset = family.subset(i);
            if !missing.iter().any(|&mi| subset.contains(mi)) {
                continue;
            }
            let mut trial: Vec<T> = counts.iter().map(|&c| T::of(c as f64)).collect();
            trial[i] = T::one();
            if !cm.is_within_budget(&trial, T::of(1e-9)) {
                continue;
            }
            // scalarize vector costs by budget-normalized total
            let price: T = cm
                .cost(i)
                .iter()
                .zip(cm.budgets())
                .map(|(&c, &b)| c / b)
                .sum();
            let better = match &best {
                None => true,
                Some((p, s, _)) => price < *p || (price == *p && subset < s),
            };
            if better {
                best = Some((price, subset, i));
            }
        }
        match best {
            Some((_, _, i)) => counts[i] = 1,
            None => return Err(AllocatorError::SupportLostAfterRounding),
        }
    }
}

/// The linear-size subset family `{{1..k}, {2..k}, {2}, ..., {k}}`.
pub fn restricted_family(k: usize) -> SubsetFamily {
    assert!(k >= 2, "restricted family needs k >= 2");
    let mut subsets: Vec<Vec<usize>> = vec![(1..=k).collect(), (2..=k).collect()];
    for i in 2..=k {
        subsets.push(vec![i]);
    }
    subsets.dedup();
    SubsetFamily::from_one_based(k, &subsets).expect("restricted family is well-formed")
}

/// In the vanishing-budget limit, all model-subset mass concentrates on the
/// subset maximizing the correlation/cost ratio `rho_I / c_I`, where
/// `rho_I = Cov_I' Sigma_I^{-1} Cov_I`. Ties break to the lexicographically
/// smallest subset.
pub fn low_budget_winner<T: Real>(
    sigma: &CovarianceMatrix<T>,
    model_subsets: &[(Subset, T)],
) -> Result<Subset, AllocatorError> {
    if model_subsets.is_empty() {
        return Err(AllocatorError::NoModelSubsets);
    }
    let mut best: Option<(T, &Subset)> = None;
    for (subset, cost) in model_subsets {
        assert!(!subset.contains(0), "model subsets must exclude the target variable");
        let rho = multiple_correlation(sigma, subset)?;
        let ratio = rho / *cost;
        let better = match &best {
            None => true,
            Some((r, s)) => ratio > *r || (ratio == *r && subset < s),
        };
        if better {
            best = Some((ratio, subset));
        }
    }
    Ok(best.expect("nonempty model subsets").1.clone())
}

/// `rho_I = Cov_I' Sigma_I^{-1} Cov_I` with `Cov_I = (Cov(X_i, X_1))_{i in I}`.
pub fn multiple_correlation<T: Real>(
    sigma: &CovarianceMatrix<T>,
    subset: &Subset,
) -> Result<T, AllocatorError> {
    let inv = sigma
        .submatrix_inverse(subset)
        .map_err(|_| AllocatorError::SingularSubmatrix { label: subset.label() })?;
    let cov: Vec<T> = subset.indices().iter().map(|&i| sigma.entries()[(i, 0)]).collect();
    Ok(dot(&cov, &inv.matvec(&cov)))
}

/// Truncate counts below `TRUNCATION_REL * max_affordable` to exactly zero.
pub(crate) fn truncate_small<T: Real>(nu: &mut [T], cm: &CostModel<T>) {
    for (i, v) in nu.iter_mut().enumerate() {
        let bound = cm.max_affordable(i);
        let threshold = if bound.is_finite() {
            T::of(TRUNCATION_REL) * bound
        } else {
            T::of(TRUNCATION_REL)
        };
        if *v < threshold {
            *v = T::zero();
        }
    }
}

/// Assemble an [`AllocationPlan`] from a fractional solution.
/// Newton solve with Jacobi scaling: barrier terms put enormous entries on
/// the diagonal, and without rescaling the moderate pivots of the
/// curvature block drown in the pivot threshold.
pub(crate) fn scaled_solve<T: Real>(hess: &Mat<T>, rhs: &[T]) -> Option<Vec<T>> {
    let p = rhs.len();
    let d: Vec<T> = (0..p)
        .map(|i| {
            let h = hess[(i, i)];
            if h > T::zero() {
                h.sqrt()
            } else {
                T::one()
            }
        })
        .collect();
    let scaled = Mat::from_fn(p, p, |i, j| hess[(i, j)] / (d[i] * d[j]));
    let scaled_rhs: Vec<T> = (0..p).map(|i| rhs[i] / d[i]).collect();
    let z = crate::linalg::lu_solve(&scaled, &scaled_rhs)?;
    Some((0..p).map(|i| z[i] / d[i]).collect())
}

pub(crate) fn finish_plan<T: Real>(
    sigma: &CovarianceMatrix<T>,
    target: &TargetSpec<T>,
    cm: &CostModel<T>,
    mut nu: Vec<T>,
    diagnostics: SolverDiagnostics,
) -> Result<AllocationPlan<T>, AllocatorError> {
    truncate_small(&mut nu, cm);
    let fractional = FractionalAllocation::new(nu);
    let family = cm.family();
    let predicted_variance_fractional =
        allocation_variance(sigma, target, family, &fractional)?;
    let rounded = round_allocation(&fractional, cm, target)?;
    let rounded_frac = rounded.as_fractional::<T>();
    let weights = optimal_weights(sigma, target, family, &rounded_frac)?;
    let predicted_variance_rounded = allocation_variance(sigma, target, family, &rounded_frac)?;
    let spend = cm.spend(rounded_frac.values());
    Ok(AllocationPlan {
        fractional,
        rounded,
        weights,
        predicted_variance_fractional,
        predicted_variance_rounded,
        spend,
        diagnostics,
    })
}

// ---------------------------------------------------------------------------
// External JSON representation
// ---------------------------------------------------------------------------

/// Wire format for [`AllocationPlan`]: counts and weights keyed by the
/// comma-joined 1-based subset label.
#[derive(Debug, Serialize, Deserialize)]
pub struct AllocationPlanRepr<T> {
    pub fractional: std::collections::BTreeMap<String, T>,
    pub rounded: std::collections::BTreeMap<String, u64>,
    pub weights: std::collections::BTreeMap<String, Vec<T>>,
    pub predicted_variance_fractional: T,
    pub predicted_variance_rounded: T,
    pub spend: Vec<T>,
    pub diagnostics: SolverDiagnostics,
}

impl<T: Real> AllocationPlan<T> {
    pub fn to_repr(&self, family: &SubsetFamily) -> AllocationPlanRepr<T> {
        let mut fractional = std::collections::BTreeMap::new();
        let mut rounded = std::collections::BTreeMap::new();
        let mut weights = std::collections::BTreeMap::new();
        for (i, subset) in family.subsets().iter().enumerate() {
            let label = subset.label();
            fractional.insert(label.clone(), self.fractional.value(i));
            rounded.insert(label.clone(), self.rounded.count(i));
            if let Some(lam) = self.weights.lambda(i) {
                weights.insert(label, lam.to_vec());
            }
        }
        AllocationPlanRepr {
            fractional,
            rounded,
            weights,
            predicted_variance_fractional: self.predicted_variance_fractional,
            predicted_variance_rounded: self.predicted_variance_rounded,
            spend: self.spend.clone(),
            diagnostics: self.diagnostics.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sigma2(rho: f64) -> CovarianceMatrix<f64> {
        CovarianceMatrix::new(Mat::from_rows(&[vec![1.0, rho], vec![rho, 1.0]])).unwrap()
    }

    fn fam(k: usize, subsets: &[&[usize]]) -> SubsetFamily {
        SubsetFamily::from_one_based(k, &subsets.iter().map(|s| s.to_vec()).collect::<Vec<_>>())
            .unwrap()
    }

    #[test]
    fn information_matrix_single_variable() {
        let sigma: CovarianceMatrix<f64> =
            CovarianceMatrix::new(Mat::from_rows(&[vec![4.0]])).unwrap();
        let family = fam(1, &[&[1]]);
        let m = information_matrix(
            &sigma,
            &family,
            &FractionalAllocation::new(vec![10.0]),
        )
        .unwrap();
        assert!((m[(0, 0)] - 2.5).abs() < 1e-12);
    }

    #[test]
    fn information_matrix_zero_allocation_is_zero() {
        let sigma = sigma2(0.8);
        let family = fam(2, &[&[1, 2], &[2]]);
        let m = information_matrix(
            &sigma,
            &family,
            &FractionalAllocation::new(vec![0.0, 0.0]),
        )
        .unwrap();
        assert_eq!(m.frobenius_norm(), 0.0);
    }

    // Oracle: explicit 2x2 inversion, M = 10 * Sigma^{-1} + 90 * e2 e2'.
    #[test]
    fn information_matrix_matches_explicit_inversion() {
        let sigma = sigma2(0.8);
        let family = fam(2, &[&[1, 2], &[2]]);
        let m = information_matrix(
            &sigma,
            &family,
            &FractionalAllocation::new(vec![10.0, 90.0]),
        )
        .unwrap();
        // Sigma^{-1} = (1/(1-0.64)) [[1,-0.8],[-0.8,1]]
        let det = 1.0 - 0.64;
        let oracle = [
            [10.0 / det, -8.0 / det],
            [-8.0 / det, 10.0 / det + 90.0],
        ];
        for i in 0..2 {
            for j in 0..2 {
                assert!((m[(i, j)] - oracle[i][j]).abs() < 1e-10, "entry {i}{j}");
            }
        }
        assert!((m[(0, 0)] - 27.7777777777778).abs() < 1e-9);
        assert!((m[(1, 1)] - 117.777777777778).abs() < 1e-9);
    }

    #[test]
    fn allocation_variance_classical_case() {
        let sigma: CovarianceMatrix<f64> =
            CovarianceMatrix::new(Mat::from_rows(&[vec![2.5]])).unwrap();
        let family = fam(1, &[&[1]]);
        let target = TargetSpec::new(vec![1.0]).unwrap();
        let v = allocation_variance(
            &sigma,
            &target,
            &family,
            &FractionalAllocation::new(vec![8.0]),
        )
        .unwrap();
        assert!((v - 2.5 / 8.0).abs() < 1e-12);
    }

    #[test]
    fn allocation_variance_full_subset_reduces_to_sigma_over_n() {
        let sigma = sigma2(0.8);
        let family = fam(2, &[&[1, 2]]);
        let target = TargetSpec::new(vec![1.0, 0.0]).unwrap();
        let v = allocation_variance(
            &sigma,
            &target,
            &family,
            &FractionalAllocation::new(vec![25.0]),
        )
        .unwrap();
        assert!((v - 1.0 / 25.0).abs() < 1e-12);
    }

    // Oracle: [M^{-1}]_11 = M22 / det(M) from the explicit M above.
    #[test]
    fn allocation_variance_matches_cofactor_oracle() {
        let sigma = sigma2(0.8);
        let family = fam(2, &[&[1, 2], &[2]]);
        let target = TargetSpec::new(vec![1.0, 0.0]).unwrap();
        let alloc = FractionalAllocation::new(vec![10.0, 90.0]);
        let m = information_matrix(&sigma, &family, &alloc).unwrap();
        let oracle = m[(1, 1)] / (m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)]);
        let v = allocation_variance(&sigma, &target, &family, &alloc).unwrap();
        assert!((v - oracle).abs() < 1e-12);
        assert!((v - 0.04240).abs() < 5e-5);
    }

    #[test]
    fn allocation_variance_unreachable_target() {
        let sigma = sigma2(0.3);
        let family = fam(2, &[&[2]]);
        let target = TargetSpec::new(vec![1.0, 0.0]).unwrap();
        let err = allocation_variance(
            &sigma,
            &target,
            &family,
            &FractionalAllocation::new(vec![5.0]),
        )
        .unwrap_err();
        assert!(matches!(err, AllocatorError::UnreachableTarget));
    }

    #[test]
    fn single_subset_weights_are_target_restriction() {
        let sigma = sigma2(0.8);
        let family = fam(2, &[&[1, 2]]);
        let target = TargetSpec::new(vec![1.0, 0.0]).unwrap();
        let w = optimal_weights(
            &sigma,
            &target,
            &family,
            &FractionalAllocation::new(vec![7.0]),
        )
        .unwrap();
        let lam = w.lambda(0).unwrap();
        assert!((lam[0] - 1.0).abs() < 1e-10);
        assert!(lam[1].abs() < 1e-10);
    }

    // Oracle: exact formula at huge n_2; the classical control-variate limit
    // lambda_2 -> Sigma_12 / Sigma_22.
    #[test]
    fn weights_approach_control_variate_limit() {
        let sigma = sigma2(0.8);
        let family = fam(2, &[&[1, 2], &[2]]);
        let target = TargetSpec::new(vec![1.0, 0.0]).unwrap();
        let alloc = FractionalAllocation::new(vec![10.0, 1e6]);
        let w = optimal_weights(&sigma, &target, &family, &alloc).unwrap();
        let lam12 = w.lambda(0).unwrap();
        let lam2 = w.lambda(1).unwrap();
        assert!((lam12[0] - 1.0).abs() < 1e-3);
        assert!((lam12[1] + 0.8).abs() < 1e-3);
        assert!((lam2[0] - 0.8).abs() < 1e-3);
        assert!(w.unbiasedness_residual(&family, &target) < 1e-10);
    }

    #[test]
    fn weights_variance_identity() {
        // sum (1/n_I) lambda_I' Sigma_I lambda_I equals a' M^+ a
        let sigma = sigma2(0.6);
        let family = fam(2, &[&[1, 2], &[2]]);
        let target = TargetSpec::new(vec![1.0, 0.0]).unwrap();
        let alloc = FractionalAllocation::new(vec![12.0, 55.0]);
        let w = optimal_weights(&sigma, &target, &family, &alloc).unwrap();
        let mut total = 0.0;
        for (i, &n) in alloc.values().iter().enumerate() {
            let lam = w.lambda(i).unwrap();
            let sub = sigma.submatrix(family.subset(i));
            total += dot(lam, &sub.matvec(lam)) / n;
        }
        let v = allocation_variance(&sigma, &target, &family, &alloc).unwrap();
        assert!((total - v).abs() <= 1e-8 * v);
    }

    #[test]
    fn rounding_floors_and_keeps_integers() {
        let family = fam(1, &[&[1]]);
        let cm = CostModel::new(family, vec![vec![1.0]], vec![10.0]).unwrap();
        let target = TargetSpec::new(vec![1.0]).unwrap();
        let r = round_allocation(&FractionalAllocation::new(vec![3.7]), &cm, &target).unwrap();
        assert_eq!(r.counts(), &[3]);
        let r2 = round_allocation(&FractionalAllocation::new(vec![4.0]), &cm, &target).unwrap();
        assert_eq!(r2.counts(), &[4]);
    }

    #[test]
    fn rounding_repairs_lost_support() {
        let family = fam(2, &[&[1, 2], &[2]]);
        let cm = CostModel::new(
            family,
            vec![vec![1.0], vec![0.1]],
            vec![10.0],
        )
        .unwrap();
        let target = TargetSpec::new(vec![1.0, 0.0]).unwrap();
        // flooring 0.6 would lose index 1; repair raises it back to one
        let frac = FractionalAllocation::new(vec![0.6, 3.0]);
        let r = round_allocation(&frac, &cm, &target).unwrap();
        assert_eq!(r.counts(), &[1, 3]);
        let s: CovarianceMatrix<f64> =
            CovarianceMatrix::new(Mat::from_rows(&[vec![1.0, 0.5], vec![0.5, 1.0]])).unwrap();
        let v = allocation_variance(
            &s,
            &target,
            cm.family(),
            &r.as_fractional(),
        )
        .unwrap();
        assert!(v.is_finite());
        assert!(cm.is_within_budget(r.as_fractional::<f64>().values(), 1e-12));
    }

    #[test]
    fn rounding_fails_when_repair_unaffordable() {
        let family = fam(1, &[&[1]]);
        let cm = CostModel::new(family, vec![vec![100.0]], vec![10.0]).unwrap();
        let target = TargetSpec::new(vec![1.0]).unwrap();
        let err =
            round_allocation(&FractionalAllocation::new(vec![0.09]), &cm, &target).unwrap_err();
        assert!(matches!(err, AllocatorError::SupportLostAfterRounding));
    }

    #[test]
    fn restricted_family_instances() {
        let f2 = restricted_family(2);
        assert_eq!(
            f2.subsets().iter().map(|s| s.label()).collect::<Vec<_>>(),
            vec!["1,2", "2"]
        );
        let f3 = restricted_family(3);
        assert_eq!(
            f3.subsets().iter().map(|s| s.label()).collect::<Vec<_>>(),
            vec!["1,2,3", "2,3", "2", "3"]
        );
        assert_eq!(restricted_family(4).len(), 5);
    }

    // Oracle: rho_{2} = 0.9^2 = 0.81, rho_{3} = 0.5^2 = 0.25; ratios 0.81 vs 1.25.
    #[test]
    fn low_budget_winner_worked_example() {
        let sigma: CovarianceMatrix<f64> = CovarianceMatrix::new(Mat::from_rows(&[
            vec![1.0, 0.9, 0.5],
            vec![0.9, 1.0, 0.4],
            vec![0.5, 0.4, 1.0],
        ]))
        .unwrap();
        let s2 = Subset::from_one_based(&[2], 3).unwrap();
        let s3 = Subset::from_one_based(&[3], 3).unwrap();
        assert!((multiple_correlation(&sigma, &s2).unwrap() - 0.81).abs() < 1e-12);
        assert!((multiple_correlation(&sigma, &s3).unwrap() - 0.25).abs() < 1e-12);
        let win =
            low_budget_winner(&sigma, &[(s2.clone(), 1.0), (s3.clone(), 0.2)]).unwrap();
        assert_eq!(win, s3);
    }

    #[test]
    fn low_budget_winner_tie_breaks_lexicographically() {
        let sigma = CovarianceMatrix::new(Mat::from_rows(&[
            vec![1.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0],
            vec![0.0, 0.0, 1.0],
        ]))
        .unwrap();
        let s2 = Subset::from_one_based(&[2], 3).unwrap();
        let s3 = Subset::from_one_based(&[3], 3).unwrap();
        let win =
            low_budget_winner(&sigma, &[(s3.clone(), 1.0), (s2.clone(), 1.0)]).unwrap();
        assert_eq!(win, s2);
    }

    #[test]
    fn low_budget_winner_single_subset() {
        let sigma = sigma2(0.5);
        let s2 = Subset::from_one_based(&[2], 2).unwrap();
        let win = low_budget_winner(&sigma, &[(s2.clone(), 3.0)]).unwrap();
        assert_eq!(win, s2);
    }

    #[test]
    fn low_budget_winner_requires_subsets() {
        let sigma = sigma2(0.5);
        assert!(matches!(
            low_budget_winner::<f64>(&sigma, &[]),
            Err(AllocatorError::NoModelSubsets)
        ));
    }
}
