//! Dense matrix numerics for small symmetric problems.
//!
//! [`SymMatrix`] carries every information matrix in the crate (H, F, C, S,
//! preconditioners, iterate covariances). Symmetry is checked exactly on
//! construction and every operation that returns a [`SymMatrix`] preserves it
//! bit-for-bit. [`Matrix`] is the general dense companion used where products
//! such as `M H` are not symmetric.

use std::fmt;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Default relative eigenvalue cutoff for truncated inverses.
pub const DEFAULT_REL_CUTOFF: f64 = 1e-3;

const JACOBI_MAX_SWEEPS: usize = 100;

/// General dense row-major matrix.
#[derive(Clone, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Matrix<T> {
    pub fn new(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::dims(format!(
                "expected {} entries for a {rows}x{cols} matrix, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![T::zero(); rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = T::one();
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn from_diag(diag: &[T]) -> Self {
        let n = diag.len();
        let mut m = Self::zeros(n, n);
        for (i, &d) in diag.iter().enumerate() {
            m.data[i * n + i] = d;
        }
        m
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: T) {
        self.data[i * self.cols + j] = v;
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn column(&self, j: usize) -> Vec<T> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    pub fn matmul(&self, other: &Matrix<T>) -> Result<Matrix<T>> {
        if self.cols != other.rows {
            return Err(Error::dims(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == T::zero() {
                    continue;
                }
                let row = &other.data[k * other.cols..(k + 1) * other.cols];
                let dst = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (d, &b) in dst.iter_mut().zip(row) {
                    *d += a * b;
                }
            }
        }
        Ok(out)
    }

    pub fn matvec(&self, v: &[T]) -> Result<Vec<T>> {
        if v.len() != self.cols {
            return Err(Error::dims(format!("matrix has {} columns, vector has {}", self.cols, v.len())));
        }
        Ok((0..self.rows)
            .map(|i| {
                let row = &self.data[i * self.cols..(i + 1) * self.cols];
                row.iter().zip(v).map(|(&a, &b)| a * b).sum()
            })
            .collect())
    }

    fn zip_with(&self, other: &Matrix<T>, f: impl Fn(T, T) -> T) -> Result<Matrix<T>> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::dims(format!(
                "{}x{} vs {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect();
        Ok(Matrix { rows: self.rows, cols: self.cols, data })
    }

    pub fn add(&self, other: &Matrix<T>) -> Result<Matrix<T>> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Matrix<T>) -> Result<Matrix<T>> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn scale(&self, s: T) -> Matrix<T> {
        Matrix { rows: self.rows, cols: self.cols, data: self.data.iter().map(|&a| a * s).collect() }
    }

    pub fn frobenius_norm(&self) -> T {
        self.data.iter().map(|&a| a * a).sum::<T>().sqrt()
    }

    pub fn trace(&self) -> T {
        (0..self.rows.min(self.cols)).map(|i| self.get(i, i)).sum()
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    /// Symmetric part `(A + Aᵀ)/2`.
    pub fn symmetric_part(&self) -> Result<SymMatrix<T>> {
        if !self.is_square() {
            return Err(Error::dims("symmetric part of a non-square matrix"));
        }
        let half = T::lit(0.5);
        let n = self.rows;
        Ok(SymMatrix::from_fn(n, |i, j| (self.get(i, j) + self.get(j, i)) * half))
    }
}

impl<T: Scalar> fmt::Debug for Matrix<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Matrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            writeln!(f, "  {:?}", &self.data[i * self.cols..(i + 1) * self.cols])?;
        }
        write!(f, "]")
    }
}

/// Dense real symmetric matrix, stored in full row-major form.
#[derive(Clone, PartialEq)]
pub struct SymMatrix<T> {
    dim: usize,
    data: Vec<T>,
}

impl<T: Scalar> SymMatrix<T> {
    /// Builds from row-major entries, rejecting anything that is not exactly symmetric.
    pub fn new(dim: usize, data: Vec<T>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("matrix dimension must be at least 1"));
        }
        if data.len() != dim * dim {
            return Err(Error::dims(format!("expected {} entries, got {}", dim * dim, data.len())));
        }
        for i in 0..dim {
            for j in (i + 1)..dim {
                if data[i * dim + j] != data[j * dim + i] {
                    return Err(Error::NotSymmetric { row: i, col: j });
                }
            }
        }
        Ok(Self { dim, data })
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let dim = rows.len();
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::dims("rows must all have length equal to the row count"));
        }
        Self::new(dim, rows.concat())
    }

    /// Fills the upper triangle from `f(i, j)` with `i <= j` and mirrors it.
    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = vec![T::zero(); dim * dim];
        for i in 0..dim {
            for j in i..dim {
                let v = f(i, j);
                data[i * dim + j] = v;
                data[j * dim + i] = v;
            }
        }
        Self { dim, data }
    }

    pub fn zeros(dim: usize) -> Self {
        Self { dim, data: vec![T::zero(); dim * dim] }
    }

    pub fn identity(dim: usize) -> Self {
        Self::diag(&vec![T::one(); dim])
    }

    pub fn diag(values: &[T]) -> Self {
        let dim = values.len();
        let mut m = Self::zeros(dim);
        for (i, &v) in values.iter().enumerate() {
            m.data[i * dim + i] = v;
        }
        m
    }

    /// `v vᵀ`.
    pub fn outer(v: &[T]) -> Self {
        Self::from_fn(v.len(), |i, j| v[i] * v[j])
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.dim + j]
    }

    /// Row-major entries.
    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn to_rows(&self) -> Vec<Vec<T>> {
        self.data.chunks(self.dim).map(|r| r.to_vec()).collect()
    }

    pub fn diagonal(&self) -> Vec<T> {
        (0..self.dim).map(|i| self.get(i, i)).collect()
    }

    pub fn to_matrix(&self) -> Matrix<T> {
        Matrix { rows: self.dim, cols: self.dim, data: self.data.clone() }
    }

    fn check_same_dim(&self, other: &SymMatrix<T>) -> Result<()> {
        if self.dim != other.dim {
            return Err(Error::dims(format!("{}x{} vs {}x{}", self.dim, self.dim, other.dim, other.dim)));
        }
        Ok(())
    }

    pub fn add(&self, other: &SymMatrix<T>) -> Result<SymMatrix<T>> {
        self.check_same_dim(other)?;
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| a + b).collect();
        Ok(Self { dim: self.dim, data })
    }

    pub fn sub(&self, other: &SymMatrix<T>) -> Result<SymMatrix<T>> {
        self.check_same_dim(other)?;
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| a - b).collect();
        Ok(Self { dim: self.dim, data })
    }

    pub fn scale(&self, s: T) -> SymMatrix<T> {
        Self { dim: self.dim, data: self.data.iter().map(|&a| a * s).collect() }
    }

    /// `self += w · v vᵀ`, in place.
    pub fn add_outer_scaled(&mut self, v: &[T], w: T) -> Result<()> {
        if v.len() != self.dim {
            return Err(Error::dims(format!("outer product of length {} into dim {}", v.len(), self.dim)));
        }
        let n = self.dim;
        for i in 0..n {
            for j in 0..n {
                // w·(v_i·v_j) evaluates identically for (i, j) and (j, i)
                self.data[i * n + j] += w * (v[i] * v[j]);
            }
        }
        Ok(())
    }

    /// `self += w · other`, in place.
    pub fn add_scaled(&mut self, other: &SymMatrix<T>, w: T) -> Result<()> {
        self.check_same_dim(other)?;
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += w * b;
        }
        Ok(())
    }

    pub fn matvec(&self, v: &[T]) -> Result<Vec<T>> {
        if v.len() != self.dim {
            return Err(Error::dims(format!("matrix dim {}, vector length {}", self.dim, v.len())));
        }
        Ok(self.data.chunks(self.dim).map(|row| row.iter().zip(v).map(|(&a, &b)| a * b).sum()).collect())
    }

    /// `vᵀ M v`.
    pub fn quadform(&self, v: &[T]) -> Result<T> {
        let mv = self.matvec(v)?;
        Ok(mv.iter().zip(v).map(|(&a, &b)| a * b).sum())
    }

    pub fn trace(&self) -> T {
        (0..self.dim).map(|i| self.get(i, i)).sum()
    }

    /// `⟨A, B⟩_F = Σ_ij a_ij b_ij`.
    pub fn frobenius_inner(&self, other: &SymMatrix<T>) -> Result<T> {
        self.check_same_dim(other)?;
        Ok(self.data.iter().zip(&other.data).map(|(&a, &b)| a * b).sum())
    }

    pub fn frobenius_norm_sq(&self) -> T {
        self.data.iter().map(|&a| a * a).sum()
    }

    pub fn frobenius_norm(&self) -> T {
        self.frobenius_norm_sq().sqrt()
    }

    pub fn frobenius_dist_sq(&self, other: &SymMatrix<T>) -> Result<T> {
        self.check_same_dim(other)?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| {
                let d = a - b;
                d * d
            })
            .sum())
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, &a| m.max(a.abs()))
    }

    /// True when every off-diagonal entry is exactly zero.
    pub fn is_diagonal(&self) -> bool {
        let n = self.dim;
        (0..n).all(|i| (0..n).all(|j| i == j || self.data[i * n + j] == T::zero()))
    }

    /// `A X Aᵀ`, symmetrized so the result is exactly symmetric.
    pub fn congruence(&self, a: &Matrix<T>) -> Result<SymMatrix<T>> {
        if a.cols() != self.dim {
            return Err(Error::dims("congruence transform has wrong column count"));
        }
        a.matmul(&self.to_matrix())?.matmul(&a.transpose())?.symmetric_part()
    }

    pub fn eigh(&self) -> Result<EigenDecomp<T>> {
        jacobi_eigh(self)
    }

    pub fn min_eigenvalue(&self) -> Result<T> {
        Ok(*self.eigh()?.values.last().expect("dim >= 1"))
    }

    pub fn max_eigenvalue(&self) -> Result<T> {
        Ok(self.eigh()?.values[0])
    }

    pub fn truncated_pinv(&self, rel_cutoff: T) -> Result<(SymMatrix<T>, usize)> {
        truncated_pinv(self, rel_cutoff)
    }
}

impl<T: Scalar> fmt::Debug for SymMatrix<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "SymMatrix {}x{} [", self.dim, self.dim)?;
        for row in self.data.chunks(self.dim) {
            writeln!(f, "  {row:?}")?;
        }
        write!(f, "]")
    }
}

/// Spectral decomposition `V diag(λ) Vᵀ` with eigenvalues sorted descending.
#[derive(Clone)]
pub struct EigenDecomp<T> {
    pub values: Vec<T>,
    /// Column `k` is the unit eigenvector paired with `values[k]`.
    pub vectors: Matrix<T>,
}

impl<T: Scalar> fmt::Debug for EigenDecomp<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("EigenDecomp").field("values", &self.values).field("vectors", &self.vectors).finish()
    }
}

impl<T: Scalar> EigenDecomp<T> {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn vector(&self, k: usize) -> Vec<T> {
        self.vectors.column(k)
    }

    /// `V f(Λ) Vᵀ`.
    pub fn map_spectrum(&self, f: impl Fn(T) -> T) -> SymMatrix<T> {
        let n = self.dim();
        let mapped: Vec<T> = self.values.iter().map(|&l| f(l)).collect();
        SymMatrix::from_fn(n, |i, j| {
            (0..n).map(|k| self.vectors.get(i, k) * mapped[k] * self.vectors.get(j, k)).sum()
        })
    }

    pub fn reconstruct(&self) -> SymMatrix<T> {
        self.map_spectrum(|l| l)
    }
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix.
pub fn eigh<T: Scalar>(m: &SymMatrix<T>) -> Result<EigenDecomp<T>> {
    jacobi_eigh(m)
}

fn jacobi_eigh<T: Scalar>(m: &SymMatrix<T>) -> Result<EigenDecomp<T>> {
    let n = m.dim();
    let mut a = m.data.clone();
    let mut v = Matrix::<T>::identity(n);
    let scale = m.frobenius_norm();
    if !scale.is_finite() {
        return Err(Error::Numerical("eigendecomposition of a matrix with non-finite entries".into()));
    }
    let tol = T::epsilon() * scale;
    let two = T::lit(2.0);

    let off = |a: &[T]| -> T {
        let mut s = T::zero();
        for i in 0..n {
            for j in (i + 1)..n {
                s += a[i * n + j] * a[i * n + j];
            }
        }
        (s * two).sqrt()
    };

    let mut converged = scale == T::zero() || off(&a) <= tol;
    let mut sweep = 0;
    while !converged && sweep < JACOBI_MAX_SWEEPS {
        sweep += 1;
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[p * n + q];
                if apq == T::zero() {
                    continue;
                }
                let app = a[p * n + p];
                let aqq = a[q * n + q];
                let theta = (aqq - app) / (two * apq);
                let t = if theta.is_infinite() {
                    T::zero()
                } else {
                    let sign = if theta >= T::zero() { T::one() } else { -T::one() };
                    sign / (theta.abs() + (theta * theta + T::one()).sqrt())
                };
                if t == T::zero() {
                    a[p * n + q] = T::zero();
                    a[q * n + p] = T::zero();
                    continue;
                }
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                a[p * n + q] = T::zero();
                a[q * n + p] = T::zero();
                for k in 0..n {
                    let vkp = v.get(k, p);
                    let vkq = v.get(k, q);
                    v.set(k, p, c * vkp - s * vkq);
                    v.set(k, q, s * vkp + c * vkq);
                }
            }
        }
        let o = off(&a);
        if !o.is_finite() {
            return Err(Error::Numerical("non-finite entries during Jacobi sweeps".into()));
        }
        converged = o <= tol;
    }
    if !converged {
        return Err(Error::Numerical(format!("Jacobi eigendecomposition did not converge in {JACOBI_MAX_SWEEPS} sweeps")));
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[j * n + j].partial_cmp(&a[i * n + i]).expect("finite eigenvalues").then(i.cmp(&j)));
    let values = order.iter().map(|&k| a[k * n + k]).collect();
    let vectors = Matrix::from_fn(n, n, |i, j| v.get(i, order[j]));
    Ok(EigenDecomp { values, vectors })
}

/// Pseudo-inverse keeping only eigenvalues `λ >= rel_cutoff · λ_max`.
///
/// Returns the inverse restricted to the retained eigenspace and its rank.
/// Eigenvalues exactly at the cutoff are kept.
pub fn truncated_pinv<T: Scalar>(m: &SymMatrix<T>, rel_cutoff: T) -> Result<(SymMatrix<T>, usize)> {
    let eig = m.eigh()?;
    let retained = retained_indices(&eig, rel_cutoff)?;
    let n = m.dim();
    let inv = SymMatrix::from_fn(n, |i, j| {
        retained
            .iter()
            .map(|&k| eig.vectors.get(i, k) * eig.vectors.get(j, k) / eig.values[k])
            .sum()
    });
    Ok((inv, retained.len()))
}

/// Indices of eigenvalues that survive the relative cutoff.
pub(crate) fn retained_indices<T: Scalar>(eig: &EigenDecomp<T>, rel_cutoff: T) -> Result<Vec<usize>> {
    if !(rel_cutoff > T::zero() && rel_cutoff < T::one()) {
        return Err(Error::invalid(format!("rel_cutoff must lie in (0, 1), got {rel_cutoff}")));
    }
    let lambda_max = eig.values[0];
    if lambda_max <= T::zero() {
        return Err(Error::DegenerateSpectrum(format!("largest eigenvalue is {lambda_max}")));
    }
    let threshold = rel_cutoff * lambda_max;
    Ok((0..eig.dim()).filter(|&k| eig.values[k] >= threshold).collect())
}

pub fn frobenius_dist_sq<T: Scalar>(a: &SymMatrix<T>, b: &SymMatrix<T>) -> Result<T> {
    a.frobenius_dist_sq(b)
}

pub fn trace<T: Scalar>(m: &SymMatrix<T>) -> T {
    m.trace()
}

pub fn matmul<T: Scalar>(a: &Matrix<T>, b: &Matrix<T>) -> Result<Matrix<T>> {
    a.matmul(b)
}

pub fn quadform<T: Scalar>(m: &SymMatrix<T>, v: &[T]) -> Result<T> {
    m.quadform(v)
}

/// Frobenius norm of `AB − BA`.
pub fn commutator_norm<T: Scalar>(a: &SymMatrix<T>, b: &SymMatrix<T>) -> Result<T> {
    let am = a.to_matrix();
    let bm = b.to_matrix();
    Ok(am.matmul(&bm)?.sub(&bm.matmul(&am)?)?.frobenius_norm())
}

pub(crate) fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}
