//! Covariance estimation from fully-labeled samples: the empirical
//! estimator and Ledoit-Wolf shrinkage toward a scaled identity.

use crate::linalg::Mat;
use crate::model::{CovarianceMatrix, ModelError};
use crate::num::Real;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CovarianceError {
    #[error("need at least 2 samples, got {got}")]
    TooFewSamples { got: usize },
    #[error("samples contain a non-finite entry")]
    NonfiniteEntry,
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Divisor convention for the empirical second moments.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Divisor {
    /// Divide by `N` (the classical estimator).
    N,
    /// Divide by `N - 1` (unbiased).
    NMinusOne,
}

/// Ledoit-Wolf shrinkage output together with its intensity diagnostics.
#[derive(Debug, Clone)]
pub struct LedoitWolfResult<T> {
    pub sigma_lw: CovarianceMatrix<T>,
    /// Shrinkage intensity in `[0, 1]`.
    pub shrinkage: T,
    /// `tr(Sigma_N) / k`, the scale of the identity target.
    pub target_scale: T,
    /// Clipped dispersion of sample outer products around `Sigma_N`.
    pub b_sq: T,
    /// Squared Frobenius distance of `Sigma_N` from the target.
    pub d_sq: T,
    /// `d_sq - b_sq`, the estimated squared distance of `Sigma` from the target.
    pub a_sq: T,
}

fn column_means<T: Real>(samples: &Mat<T>) -> Vec<T> {
    let n = T::of(samples.nrows() as f64);
    (0..samples.ncols())
        .map(|j| (0..samples.nrows()).map(|i| samples[(i, j)]).sum::<T>() / n)
        .collect()
}

/// Centered second-moment matrix with the requested divisor.
pub fn empirical_covariance<T: Real>(
    samples: &Mat<T>,
    divisor: Divisor,
) -> Result<CovarianceMatrix<T>, CovarianceError> {
    let n = samples.nrows();
    if n < 2 {
        return Err(CovarianceError::TooFewSamples { got: n });
    }
    if !samples.is_finite() {
        return Err(CovarianceError::NonfiniteEntry);
    }
    let k = samples.ncols();
    let means = column_means(samples);
    let denom = match divisor {
        Divisor::N => T::of(n as f64),
        Divisor::NMinusOne => T::of((n - 1) as f64),
    };
    let mut cov = Mat::zeros(k, k);
    for r in 0..n {
        for i in 0..k {
            let di = samples[(r, i)] - means[i];
            for j in i..k {
                cov[(i, j)] += di * (samples[(r, j)] - means[j]);
            }
        }
    }
    for i in 0..k {
        for j in i..k {
            let v = cov[(i, j)] / denom;
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }
    Ok(CovarianceMatrix::new(cov)?)
}

/// Ledoit-Wolf shrinkage: `Sigma_LW = (1 - delta) Sigma_N + delta m I`
/// with `delta = b^2 / d^2`, `b^2` clipped from above by `d^2`.
/// Divisor `N` is used throughout.
pub fn ledoit_wolf<T: Real>(samples: &Mat<T>) -> Result<LedoitWolfResult<T>, CovarianceError> {
    let n = samples.nrows();
    if n < 2 {
        return Err(CovarianceError::TooFewSamples { got: n });
    }
    if !samples.is_finite() {
        return Err(CovarianceError::NonfiniteEntry);
    }
    let k = samples.ncols();
    let sigma_n = empirical_covariance(samples, Divisor::N)?;
    let sn = sigma_n.entries();
    let m_hat = sn.trace() / T::of(k as f64);

    // d^2 = || Sigma_N - m I ||_F^2
    let mut d_sq = T::zero();
    for i in 0..k {
        for j in 0..k {
            let target = if i == j { m_hat } else { T::zero() };
            let diff = sn[(i, j)] - target;
            d_sq += diff * diff;
        }
    }

    // b_bar^2 = (1/N^2) sum_j || x_j x_j' - Sigma_N ||_F^2 over centered rows
    let means = column_means(samples);
    let mut b_bar = T::zero();
    for r in 0..n {
        let centered: Vec<T> =
            (0..k).map(|j| samples[(r, j)] - means[j]).collect();
        for i in 0..k {
            for j in 0..k {
                let diff = centered[i] * centered[j] - sn[(i, j)];
                b_bar += diff * diff;
            }
        }
    }
    b_bar = b_bar / T::of((n * n) as f64);
    let b_sq = b_bar.min(d_sq);

    let delta = if d_sq == T::zero() { T::zero() } else { b_sq / d_sq };
    let mut lw = sn.scale(T::one() - delta);
    for i in 0..k {
        lw[(i, i)] += delta * m_hat;
    }
    Ok(LedoitWolfResult {
        sigma_lw: CovarianceMatrix::new(lw)?,
        shrinkage: delta,
        target_scale: m_hat,
        b_sq,
        d_sq,
        a_sq: d_sq - b_sq,
    })
}
