//! Shared domain types: targets, subset families, covariance structure,
//! cost models, allocations and estimator weights.
//!
//! Variable indices are 1-based in every external format and converted to
//! 0-based exactly once, at construction.

use crate::linalg::{lu_inverse, min_eigenvalue, sym_eig, Mat};
use crate::num::Real;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("subset family is empty")]
    EmptyFamily,
    #[error("subset must not be empty")]
    EmptySubset,
    #[error("index {index} out of range 1..={k}")]
    IndexOutOfRange { index: usize, k: usize },
    #[error("duplicate subset {label}")]
    DuplicateSubset { label: String },
    #[error("subset {label} has zero cost in every budget row")]
    ZeroCostSubset { label: String },
    #[error("budget row {row} is not positive")]
    NonpositiveBudget { row: usize },
    #[error("cost rows must align with subsets and budget length")]
    CostShapeMismatch,
    #[error("target coefficient vector must be nonzero")]
    ZeroTarget,
    #[error("covariance matrix is not symmetric within tolerance")]
    NotSymmetric,
    #[error("covariance matrix is not positive semi-definite within tolerance")]
    NotPsd,
    #[error("covariance matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("allocation is not keyed by the subset family ({expected} subsets, got {got})")]
    UnknownSubset { expected: usize, got: usize },
    #[error("matrix contains a non-finite entry")]
    NonfiniteEntry,
    #[error("sample batch row width {got} does not match subset size {expected}")]
    BatchWidthMismatch { expected: usize, got: usize },
    #[error("invalid subset label {label:?}")]
    BadSubsetLabel { label: String },
}

/// A nonempty set of variable indices, stored 0-based, sorted, deduplicated.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Subset {
    indices: Vec<usize>,
}

impl Subset {
    /// Build from 1-based external indices; canonicalizes order and duplicates.
    pub fn from_one_based(indices: &[usize], k: usize) -> Result<Self, ModelError> {
        if indices.is_empty() {
            return Err(ModelError::EmptySubset);
        }
        let mut zero: Vec<usize> = Vec::with_capacity(indices.len());
        for &i in indices {
            if i == 0 || i > k {
                return Err(ModelError::IndexOutOfRange { index: i, k });
            }
            zero.push(i - 1);
        }
        zero.sort_unstable();
        zero.dedup();
        Ok(Subset { indices: zero })
    }

    /// 0-based sorted indices.
    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, zero_based: usize) -> bool {
        self.indices.binary_search(&zero_based).is_ok()
    }

    /// Comma-joined 1-based label, e.g. "1,3".
    pub fn label(&self) -> String {
        self.indices
            .iter()
            .map(|i| (i + 1).to_string())
            .collect::<Vec<_>>()
            .join(",")
    }

    pub fn parse_label(label: &str, k: usize) -> Result<Self, ModelError> {
        let parsed: Result<Vec<usize>, _> = label.split(',').map(|s| s.trim().parse()).collect();
        let one_based = parsed.map_err(|_| ModelError::BadSubsetLabel { label: label.into() })?;
        Subset::from_one_based(&one_based, k)
    }
}

/// Ordered collection of distinct subsets of `{1..k}`.
#[derive(Debug, Clone, PartialEq)]
pub struct SubsetFamily {
    k: usize,
    subsets: Vec<Subset>,
}

impl SubsetFamily {
    pub fn new(k: usize, subsets: Vec<Subset>) -> Result<Self, ModelError> {
        if subsets.is_empty() {
            return Err(ModelError::EmptyFamily);
        }
        let mut seen = BTreeSet::new();
        for s in &subsets {
            if let Some(&worst) = s.indices().last() {
                if worst >= k {
                    return Err(ModelError::IndexOutOfRange { index: worst + 1, k });
                }
            }
            if !seen.insert(s.clone()) {
                return Err(ModelError::DuplicateSubset { label: s.label() });
            }
        }
        Ok(SubsetFamily { k, subsets })
    }

    pub fn from_one_based(k: usize, subsets: &[Vec<usize>]) -> Result<Self, ModelError> {
        let subs: Result<Vec<_>, _> =
            subsets.iter().map(|s| Subset::from_one_based(s, k)).collect();
        Self::new(k, subs?)
    }

    /// All nonempty subsets of `{1..k}`, in binary-counting order.
    pub fn powerset(k: usize) -> Self {
        let mut subsets = Vec::with_capacity((1usize << k) - 1);
        for mask in 1usize..(1 << k) {
            let idx: Vec<usize> = (0..k).filter(|i| mask & (1 << i) != 0).map(|i| i + 1).collect();
            subsets.push(Subset::from_one_based(&idx, k).unwrap());
        }
        SubsetFamily { k, subsets }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.subsets.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn subsets(&self) -> &[Subset] {
        &self.subsets
    }

    pub fn subset(&self, i: usize) -> &Subset {
        &self.subsets[i]
    }

    pub fn position(&self, s: &Subset) -> Option<usize> {
        self.subsets.iter().position(|t| t == s)
    }

    /// Union of all member subsets (0-based).
    pub fn union_all(&self) -> BTreeSet<usize> {
        self.subsets.iter().flat_map(|s| s.indices().iter().copied()).collect()
    }
}

/// The linear functional `a' E[X]` being estimated.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetSpec<T> {
    a: Vec<T>,
}

impl<T: Real> TargetSpec<T> {
    pub fn new(a: Vec<T>) -> Result<Self, ModelError> {
        if a.is_empty() || a.iter().all(|&x| x == T::zero()) {
            return Err(ModelError::ZeroTarget);
        }
        if a.iter().any(|x| !x.is_finite()) {
            return Err(ModelError::NonfiniteEntry);
        }
        Ok(TargetSpec { a })
    }

    /// `a = e1` in dimension `k`, the common "estimate E[X_1]" target.
    pub fn first_coordinate(k: usize) -> Self {
        let mut a = vec![T::zero(); k];
        a[0] = T::one();
        TargetSpec { a }
    }

    pub fn k(&self) -> usize {
        self.a.len()
    }

    pub fn coefficients(&self) -> &[T] {
        &self.a
    }

    /// 0-based indices with nonzero coefficient; nonempty by construction.
    pub fn support(&self) -> Vec<usize> {
        self.a
            .iter()
            .enumerate()
            .filter(|(_, &x)| x != T::zero())
            .map(|(i, _)| i)
            .collect()
    }
}

/// Symmetric PSD covariance matrix with tolerance-checked construction.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceMatrix<T> {
    entries: Mat<T>,
    tolerance: T,
}

impl<T: Real> CovarianceMatrix<T> {
    /// Validates symmetry and positive semi-definiteness. The default
    /// tolerance is `1e-8 * ||Sigma||_F`.
    pub fn new(entries: Mat<T>) -> Result<Self, ModelError> {
        let tol = T::of(1e-8) * entries.frobenius_norm().max(T::one());
        Self::with_tolerance(entries, tol)
    }

    pub fn with_tolerance(entries: Mat<T>, tolerance: T) -> Result<Self, ModelError> {
        if entries.nrows() != entries.ncols() {
            return Err(ModelError::NotSquare { rows: entries.nrows(), cols: entries.ncols() });
        }
        if !entries.is_finite() {
            return Err(ModelError::NonfiniteEntry);
        }
        if entries.max_abs_asymmetry() > tolerance {
            return Err(ModelError::NotSymmetric);
        }
        if min_eigenvalue(&entries) < -tolerance {
            return Err(ModelError::NotPsd);
        }
        Ok(CovarianceMatrix { entries, tolerance })
    }

    pub fn k(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &Mat<T> {
        &self.entries
    }

    pub fn tolerance(&self) -> T {
        self.tolerance
    }

    pub fn min_eigenvalue(&self) -> T {
        min_eigenvalue(&self.entries)
    }

    pub fn max_eigenvalue(&self) -> T {
        sym_eig(&self.entries).values.into_iter().fold(T::neg_infinity(), T::max)
    }

    /// Strictly positive-definite check used before handing to a solver.
    pub fn is_spd(&self) -> bool {
        self.min_eigenvalue() > self.tolerance
    }

    /// Principal submatrix `Sigma_I` as a dense `|I| x |I|` matrix.
    pub fn submatrix(&self, subset: &Subset) -> Mat<T> {
        self.entries.principal_submatrix(subset.indices())
    }

    /// Inverse of `Sigma_I`; errors when the submatrix is numerically singular.
    pub fn submatrix_inverse(&self, subset: &Subset) -> Result<Mat<T>, ModelError> {
        let sub = self.submatrix(subset);
        if min_eigenvalue(&sub) <= self.tolerance {
            return Err(ModelError::NotPsd);
        }
        lu_inverse(&sub).ok_or(ModelError::NotPsd)
    }

    /// `P_I' Sigma_I^{-1} P_I`: the inverse of the principal submatrix
    /// embedded back into `k x k`.
    pub fn embedded_inverse(&self, subset: &Subset) -> Result<Mat<T>, ModelError> {
        let inv = self.submatrix_inverse(subset)?;
        let k = self.k();
        let mut out = Mat::zeros(k, k);
        for (a, &ia) in subset.indices().iter().enumerate() {
            for (b, &ib) in subset.indices().iter().enumerate() {
                out[(ia, ib)] = inv[(a, b)];
            }
        }
        Ok(out)
    }
}

/// Subset family with vector-valued per-query costs and a budget vector.
#[derive(Debug, Clone, PartialEq)]
pub struct CostModel<T> {
    family: SubsetFamily,
    /// `costs[i]` is the length-`m` cost vector of `family.subset(i)`.
    costs: Vec<Vec<T>>,
    budgets: Vec<T>,
}

impl<T: Real> CostModel<T> {
    pub fn new(
        family: SubsetFamily,
        costs: Vec<Vec<T>>,
        budgets: Vec<T>,
    ) -> Result<Self, ModelError> {
        validate_cost_model(CostModel { family, costs, budgets })
    }

    pub fn family(&self) -> &SubsetFamily {
        &self.family
    }

    pub fn k(&self) -> usize {
        self.family.k()
    }

    /// Number of budget rows.
    pub fn m(&self) -> usize {
        self.budgets.len()
    }

    pub fn cost(&self, subset_index: usize) -> &[T] {
        &self.costs[subset_index]
    }

    pub fn budgets(&self) -> &[T] {
        &self.budgets
    }

    /// Largest fractional count of subset `i` affordable in isolation.
    pub fn max_affordable(&self, subset_index: usize) -> T {
        let mut bound = T::infinity();
        for (l, &b) in self.budgets.iter().enumerate() {
            let c = self.costs[subset_index][l];
            if c > T::zero() {
                bound = bound.min(b / c);
            }
        }
        bound
    }

    /// Realized spend per budget row for fractional counts `nu`.
    pub fn spend(&self, nu: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); self.m()];
        for (i, &v) in nu.iter().enumerate() {
            for (l, s) in out.iter_mut().enumerate() {
                *s += v * self.costs[i][l];
            }
        }
        out
    }

    pub fn is_within_budget(&self, nu: &[T], slack: T) -> bool {
        self.spend(nu)
            .iter()
            .zip(&self.budgets)
            .all(|(&s, &b)| s <= b + slack)
    }
}

/// Checks the cost-model invariants and returns the model unchanged.
pub fn validate_cost_model<T: Real>(cm: CostModel<T>) -> Result<CostModel<T>, ModelError> {
    if cm.costs.len() != cm.family.len() || cm.budgets.is_empty() {
        return Err(ModelError::CostShapeMismatch);
    }
    let m = cm.budgets.len();
    for (row, &b) in cm.budgets.iter().enumerate() {
        if !(b > T::zero()) || !b.is_finite() {
            return Err(ModelError::NonpositiveBudget { row });
        }
    }
    for (i, c) in cm.costs.iter().enumerate() {
        if c.len() != m {
            return Err(ModelError::CostShapeMismatch);
        }
        if c.iter().any(|&x| x < T::zero() || !x.is_finite()) {
            return Err(ModelError::CostShapeMismatch);
        }
        if c.iter().all(|&x| x == T::zero()) {
            return Err(ModelError::ZeroCostSubset { label: cm.family.subset(i).label() });
        }
    }
    Ok(cm)
}

/// Integer per-subset sample counts, aligned with a subset family.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Allocation {
    counts: Vec<u64>,
}

impl Allocation {
    pub fn new(counts: Vec<u64>) -> Self {
        Allocation { counts }
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn count(&self, subset_index: usize) -> u64 {
        self.counts[subset_index]
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn as_fractional<T: Real>(&self) -> FractionalAllocation<T> {
        FractionalAllocation::new(self.counts.iter().map(|&n| T::of(n as f64)).collect())
    }
}

/// Real-valued relaxation of an allocation.
#[derive(Debug, Clone, PartialEq)]
pub struct FractionalAllocation<T> {
    nu: Vec<T>,
}

impl<T: Real> FractionalAllocation<T> {
    pub fn new(nu: Vec<T>) -> Self {
        FractionalAllocation { nu }
    }

    pub fn values(&self) -> &[T] {
        &self.nu
    }

    pub fn value(&self, subset_index: usize) -> T {
        self.nu[subset_index]
    }

    pub fn len(&self) -> usize {
        self.nu.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nu.is_empty()
    }

    pub fn floor(&self) -> Allocation {
        Allocation::new(self.nu.iter().map(|&v| v.max(T::zero()).floor().as_f64() as u64).collect())
    }
}

/// Union of subsets with a positive count: `U {I : n_I > 0}` (0-based).
pub fn support_union<T: Real>(
    counts: &FractionalAllocation<T>,
    family: &SubsetFamily,
) -> Result<BTreeSet<usize>, ModelError> {
    if counts.len() != family.len() {
        return Err(ModelError::UnknownSubset { expected: family.len(), got: counts.len() });
    }
    let mut out = BTreeSet::new();
    for (i, &v) in counts.values().iter().enumerate() {
        if v > T::zero() {
            out.extend(family.subset(i).indices().iter().copied());
        }
    }
    Ok(out)
}

/// Per-subset weight vectors defining the linear estimator; `None` marks
/// subsets with a zero count, which carry no weight.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightScheme<T> {
    lambdas: Vec<Option<Vec<T>>>,
}

impl<T: Real> WeightScheme<T> {
    pub fn new(lambdas: Vec<Option<Vec<T>>>) -> Self {
        WeightScheme { lambdas }
    }

    pub fn len(&self) -> usize {
        self.lambdas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambdas.is_empty()
    }

    pub fn lambda(&self, subset_index: usize) -> Option<&[T]> {
        self.lambdas[subset_index].as_deref()
    }

    /// `sum_I P_I' lambda_I` as a length-`k` vector.
    pub fn assemble(&self, family: &SubsetFamily) -> Vec<T> {
        let mut out = vec![T::zero(); family.k()];
        for (i, lam) in self.lambdas.iter().enumerate() {
            if let Some(lam) = lam {
                for (pos, &idx) in family.subset(i).indices().iter().enumerate() {
                    out[idx] += lam[pos];
                }
            }
        }
        out
    }

    /// Max-abs unbiasedness residual `|| sum_I P_I' lambda_I - a ||_inf`.
    pub fn unbiasedness_residual(&self, family: &SubsetFamily, target: &TargetSpec<T>) -> T {
        self.assemble(family)
            .iter()
            .zip(target.coefficients())
            .map(|(&got, &want)| (got - want).abs())
            .fold(T::zero(), T::max)
    }
}

/// Observed rows for one subset; row width equals the subset size.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleBatch<T> {
    subset: Subset,
    rows: Vec<Vec<T>>,
}

impl<T: Real> SampleBatch<T> {
    pub fn new(subset: Subset, rows: Vec<Vec<T>>) -> Result<Self, ModelError> {
        for row in &rows {
            if row.len() != subset.len() {
                return Err(ModelError::BatchWidthMismatch {
                    expected: subset.len(),
                    got: row.len(),
                });
            }
            if row.iter().any(|x| !x.is_finite()) {
                return Err(ModelError::NonfiniteEntry);
            }
        }
        Ok(SampleBatch { subset, rows })
    }

    pub fn subset(&self) -> &Subset {
        &self.subset
    }

    pub fn rows(&self) -> &[Vec<T>] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

// ---------------------------------------------------------------------------
// External JSON representation
// ---------------------------------------------------------------------------

/// Wire format for [`CostModel`]: 1-based subsets, costs aligned to subsets.
#[derive(Debug, Serialize, Deserialize)]
pub struct CostModelRepr<T> {
    pub k: usize,
    pub subsets: Vec<Vec<usize>>,
    pub costs: Vec<Vec<T>>,
    pub budgets: Vec<T>,
}

impl<T: Real> CostModel<T> {
    pub fn to_repr(&self) -> CostModelRepr<T> {
        CostModelRepr {
            k: self.family.k(),
            subsets: self
                .family
                .subsets()
                .iter()
                .map(|s| s.indices().iter().map(|i| i + 1).collect())
                .collect(),
            costs: self.costs.clone(),
            budgets: self.budgets.clone(),
        }
    }

    pub fn from_repr(repr: CostModelRepr<T>) -> Result<Self, ModelError> {
        let family = SubsetFamily::from_one_based(repr.k, &repr.subsets)?;
        CostModel::new(family, repr.costs, repr.budgets)
    }
}
