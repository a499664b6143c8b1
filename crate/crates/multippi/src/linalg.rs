//! Small dense matrix routines.
//!
//! The problems solved here are tiny (k rarely exceeds 8), so we keep our
//! own row-major matrix type with a cyclic Jacobi eigensolver, an LU solve
//! and an eigendecomposition-based pseudo-inverse, all generic over the
//! scalar type.

use crate::num::Real;
use serde::{Deserialize, Serialize};

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mat<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Real> Mat<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat { rows, cols, data: vec![T::zero(); rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Self {
        assert!(!rows.is_empty(), "matrix needs at least one row");
        let cols = rows[0].len();
        assert!(rows.iter().all(|r| r.len() == cols), "ragged rows");
        Mat { rows: rows.len(), cols, data: rows.concat() }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut m = Self::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m[(i, j)] = f(i, j);
            }
        }
        m
    }

    pub fn nrows(&self) -> usize {
        self.rows
    }

    pub fn ncols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn matvec(&self, x: &[T]) -> Vec<T> {
        assert_eq!(x.len(), self.cols);
        (0..self.rows)
            .map(|i| self.row(i).iter().zip(x).map(|(&m, &v)| m * v).sum())
            .collect()
    }

    pub fn matmul(&self, other: &Mat<T>) -> Mat<T> {
        assert_eq!(self.cols, other.rows);
        let mut out = Mat::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for l in 0..self.cols {
                let a = self[(i, l)];
                if a == T::zero() {
                    continue;
                }
                for j in 0..other.cols {
                    out[(i, j)] += a * other[(l, j)];
                }
            }
        }
        out
    }

    pub fn transpose(&self) -> Mat<T> {
        Mat::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn add_assign_scaled(&mut self, other: &Mat<T>, scale: T) {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += scale * b;
        }
    }

    pub fn scale(&self, s: T) -> Mat<T> {
        Mat { rows: self.rows, cols: self.cols, data: self.data.iter().map(|&x| x * s).collect() }
    }

    pub fn frobenius_norm(&self) -> T {
        self.data.iter().map(|&x| x * x).sum::<T>().sqrt()
    }

    pub fn trace(&self) -> T {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    pub fn max_abs_asymmetry(&self) -> T {
        let mut worst = T::zero();
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                worst = worst.max((self[(i, j)] - self[(j, i)]).abs());
            }
        }
        worst
    }

    /// Principal submatrix on 0-based index list `idx`.
    pub fn principal_submatrix(&self, idx: &[usize]) -> Mat<T> {
        Mat::from_fn(idx.len(), idx.len(), |i, j| self[(idx[i], idx[j])])
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

impl<T> std::ops::Index<(usize, usize)> for Mat<T> {
    type Output = T;
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.cols + j]
    }
}

impl<T> std::ops::IndexMut<(usize, usize)> for Mat<T> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.cols + j]
    }
}

/// Eigendecomposition of a symmetric matrix: `a = v diag(values) v^T`.
pub struct SymEig<T> {
    pub values: Vec<T>,
    /// Eigenvectors as columns.
    pub vectors: Mat<T>,
}

/// Cyclic Jacobi eigensolver for symmetric matrices.
pub fn sym_eig<T: Real>(a: &Mat<T>) -> SymEig<T> {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "sym_eig expects a square matrix");
    let mut m = a.clone();
    // Symmetrize to guard against roundoff-level asymmetry in the input.
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = (m[(i, j)] + m[(j, i)]) / T::of(2.0);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
    let mut v = Mat::identity(n);
    let half = T::of(0.5);
    for _sweep in 0..100 {
        let mut off = T::zero();
        for i in 0..n {
            for j in (i + 1)..n {
                off += m[(i, j)] * m[(i, j)];
            }
        }
        let scale = m.frobenius_norm();
        if off.sqrt() <= T::epsilon() * scale.max(T::min_positive_value()) {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[(p, q)];
                if apq == T::zero() {
                    continue;
                }
                let app = m[(p, p)];
                let aqq = m[(q, q)];
                let theta = half * (aqq - app) / apq;
                let t = if theta == T::zero() {
                    T::one()
                } else {
                    let s = if theta > T::zero() { T::one() } else { -T::one() };
                    s / (theta.abs() + (T::one() + theta * theta).sqrt())
                };
                let c = T::one() / (T::one() + t * t).sqrt();
                let s = t * c;
                for i in 0..n {
                    let mip = m[(i, p)];
                    let miq = m[(i, q)];
                    m[(i, p)] = c * mip - s * miq;
                    m[(i, q)] = s * mip + c * miq;
                }
                for j in 0..n {
                    let mpj = m[(p, j)];
                    let mqj = m[(q, j)];
                    m[(p, j)] = c * mpj - s * mqj;
                    m[(q, j)] = s * mpj + c * mqj;
                }
                for i in 0..n {
                    let vip = v[(i, p)];
                    let viq = v[(i, q)];
                    v[(i, p)] = c * vip - s * viq;
                    v[(i, q)] = s * vip + c * viq;
                }
            }
        }
    }
    let values = (0..n).map(|i| m[(i, i)]).collect();
    SymEig { values, vectors: v }
}

/// Minimum eigenvalue of a symmetric matrix.
pub fn min_eigenvalue<T: Real>(a: &Mat<T>) -> T {
    sym_eig(a).values.into_iter().fold(T::infinity(), T::min)
}

/// Moore-Penrose pseudo-inverse via eigendecomposition; eigenvalues below
/// `cutoff_rel * gamma_max` are treated as zero.
pub fn pinv_sym<T: Real>(a: &Mat<T>, cutoff_rel: T) -> Mat<T> {
    let SymEig { values, vectors } = sym_eig(a);
    let gamma_max = values.iter().fold(T::zero(), |acc, &x| acc.max(x.abs()));
    let cutoff = cutoff_rel * gamma_max;
    let n = a.nrows();
    let mut out = Mat::zeros(n, n);
    for (r, &val) in values.iter().enumerate() {
        if val.abs() <= cutoff {
            continue;
        }
        let inv = T::one() / val;
        for i in 0..n {
            let vi = vectors[(i, r)];
            if vi == T::zero() {
                continue;
            }
            for j in 0..n {
                out[(i, j)] += inv * vi * vectors[(j, r)];
            }
        }
    }
    out
}

/// Solve `a x = b` by LU decomposition with partial pivoting.
/// Returns `None` when the matrix is numerically singular.
pub fn lu_solve<T: Real>(a: &Mat<T>, b: &[T]) -> Option<Vec<T>> {
    let n = a.nrows();
    assert_eq!(n, a.ncols());
    assert_eq!(n, b.len());
    let mut m = a.clone();
    let mut x: Vec<T> = b.to_vec();
    for col in 0..n {
        let (pivot_row, pivot) = (col..n)
            .map(|r| (r, m[(r, col)].abs()))
            .fold((col, T::zero()), |best, cand| if cand.1 > best.1 { cand } else { best });
        if pivot <= T::epsilon() * T::of(n as f64) * m.frobenius_norm() {
            return None;
        }
        if pivot_row != col {
            for j in 0..n {
                let tmp = m[(col, j)];
                m[(col, j)] = m[(pivot_row, j)];
                m[(pivot_row, j)] = tmp;
            }
            x.swap(col, pivot_row);
        }
        for r in (col + 1)..n {
            let f = m[(r, col)] / m[(col, col)];
            if f == T::zero() {
                continue;
            }
            for j in col..n {
                let v = m[(col, j)];
                m[(r, j)] -= f * v;
            }
            let xc = x[col];
            x[r] -= f * xc;
        }
    }
    for col in (0..n).rev() {
        let mut acc = x[col];
        for j in (col + 1)..n {
            acc -= m[(col, j)] * x[j];
        }
        x[col] = acc / m[(col, col)];
    }
    Some(x)
}

/// Inverse of a small nonsingular matrix via LU solves against the identity.
pub fn lu_inverse<T: Real>(a: &Mat<T>) -> Option<Mat<T>> {
    let n = a.nrows();
    let mut out = Mat::zeros(n, n);
    for j in 0..n {
        let mut e = vec![T::zero(); n];
        e[j] = T::one();
        let col = lu_solve(a, &e)?;
        for i in 0..n {
            out[(i, j)] = col[i];
        }
    }
    Some(out)
}

/// Lower Cholesky factor of a symmetric PSD matrix. Falls back to the
/// eigendecomposition square root when the matrix is semi-definite.
pub fn psd_sqrt<T: Real>(a: &Mat<T>) -> Mat<T> {
    let n = a.nrows();
    let mut l = Mat::zeros(n, n);
    let mut ok = true;
    'chol: for i in 0..n {
        for j in 0..=i {
            let mut s = a[(i, j)];
            for p in 0..j {
                s -= l[(i, p)] * l[(j, p)];
            }
            if i == j {
                if s <= T::zero() {
                    ok = false;
                    break 'chol;
                }
                l[(i, j)] = s.sqrt();
            } else {
                l[(i, j)] = s / l[(j, j)];
            }
        }
    }
    if ok {
        return l;
    }
    // Semi-definite: symmetric square root from the eigendecomposition.
    let SymEig { values, vectors } = sym_eig(a);
    let mut root = Mat::zeros(n, n);
    for (r, &val) in values.iter().enumerate() {
        let sq = val.max(T::zero()).sqrt();
        for i in 0..n {
            for j in 0..n {
                root[(i, j)] += sq * vectors[(i, r)] * vectors[(j, r)];
            }
        }
    }
    root
}

pub fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    assert_eq!(a.len(), b.len());
    let mut acc = T::zero();
    for (&x, &y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc
}
