//! Dense symmetric-matrix kernel: eigendecomposition, PSD square roots,
//! inverse square roots and Cholesky factors for small dimensions.

use std::ops::{Add, Index, IndexMut, Mul, Sub};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Tolerances used by the factorization routines.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Numerics {
    /// Relative asymmetry accepted by [`SymMatrix::new`].
    pub symmetry_tol: f64,
    /// Eigenvalues in `[-psd_clamp * ||S||_F, 0)` are clamped to zero by [`psd_sqrt`].
    pub psd_clamp: f64,
    /// Smallest eigenvalue accepted by [`inv_sqrt`], relative to `||S||_F`.
    pub eig_floor: f64,
    /// Smallest Cholesky pivot, relative to `trace(S) / d`.
    pub pivot_floor: f64,
    pub max_sweeps: usize,
}

impl Default for Numerics {
    fn default() -> Self {
        Self {
            symmetry_tol: 1e-10,
            psd_clamp: 1e-9,
            eig_floor: 1e-12,
            pivot_floor: 1e-12,
            max_sweeps: 100,
        }
    }
}

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Real> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn identity(d: usize) -> Self {
        let mut m = Self::zeros(d, d);
        for i in 0..d {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn from_diag(diag: &[T]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, &x) in diag.iter().enumerate() {
            m[(i, i)] = x;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                expected: rows * cols,
                found: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let n = rows.len();
        let m = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(n * m);
        for row in rows {
            if row.len() != m {
                return Err(Error::DimensionMismatch {
                    expected: m,
                    found: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Ok(Self { rows: n, cols: m, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn to_rows(&self) -> Vec<Vec<T>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn scale(&self, a: T) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| x * a).collect(),
        }
    }

    pub fn mul_vec(&self, v: &[T]) -> Vec<T> {
        assert_eq!(v.len(), self.cols, "matrix-vector dimension mismatch");
        (0..self.rows)
            .map(|i| self.row(i).iter().zip(v).fold(T::zero(), |acc, (&a, &b)| acc + a * b))
            .collect()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// `(M + M^T) / 2`, for products that are symmetric only in exact arithmetic.
    pub fn symmetric_part(&self) -> Self {
        assert!(self.is_square());
        let mut s = self.clone();
        let half = T::of(0.5);
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                let v = (self[(i, j)] + self[(j, i)]) * half;
                s[(i, j)] = v;
                s[(j, i)] = v;
            }
        }
        s
    }
}

impl<T> Index<(usize, usize)> for Matrix<T> {
    type Output = T;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.cols + j]
    }
}

impl<T> IndexMut<(usize, usize)> for Matrix<T> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.cols + j]
    }
}

impl<T: Real> Mul for &Matrix<T> {
    type Output = Matrix<T>;

    fn mul(self, rhs: &Matrix<T>) -> Matrix<T> {
        assert_eq!(self.cols, rhs.rows, "matrix product dimension mismatch");
        let mut out = Matrix::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for l in 0..self.cols {
                let a = self[(i, l)];
                if a == T::zero() {
                    continue;
                }
                for j in 0..rhs.cols {
                    out[(i, j)] = out[(i, j)] + a * rhs[(l, j)];
                }
            }
        }
        out
    }
}

impl<T: Real> Add for &Matrix<T> {
    type Output = Matrix<T>;

    fn add(self, rhs: &Matrix<T>) -> Matrix<T> {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(&a, &b)| a + b).collect(),
        }
    }
}

impl<T: Real> Sub for &Matrix<T> {
    type Output = Matrix<T>;

    fn sub(self, rhs: &Matrix<T>) -> Matrix<T> {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(&a, &b)| a - b).collect(),
        }
    }
}

/// Frobenius norm `sqrt(sum_ij M_ij^2)`.
pub fn frob_norm<T: Real>(m: &Matrix<T>) -> T {
    // scaled accumulation avoids overflow for large entries
    let scale = m.data.iter().fold(T::zero(), |acc, x| acc.max(x.abs()));
    if scale == T::zero() {
        return T::zero();
    }
    let sum: T = m.data.iter().map(|&x| (x / scale) * (x / scale)).sum();
    scale * sum.sqrt()
}

/// Euclidean norm of a vector.
pub fn norm2<T: Real>(v: &[T]) -> T {
    let scale = v.iter().fold(T::zero(), |acc, x| acc.max(x.abs()));
    if scale == T::zero() {
        return T::zero();
    }
    let sum: T = v.iter().map(|&x| (x / scale) * (x / scale)).sum();
    scale * sum.sqrt()
}

/// A square matrix validated to be symmetric with finite entries.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix<T>(Matrix<T>);

impl<T: Real> SymMatrix<T> {
    pub fn new(m: Matrix<T>) -> Result<Self> {
        Self::with_numerics(m, &Numerics::default())
    }

    pub fn with_numerics(m: Matrix<T>, num: &Numerics) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::DimensionMismatch {
                expected: m.rows,
                found: m.cols,
            });
        }
        if m.rows == 0 {
            return Err(Error::param("matrix dimension must be positive"));
        }
        if !m.is_finite() {
            return Err(Error::NonFinite("symmetric matrix"));
        }
        let tol = T::tol(num.symmetry_tol);
        for i in 0..m.rows {
            for j in (i + 1)..m.cols {
                let a = m[(i, j)].as_f64();
                let b = m[(j, i)].as_f64();
                if (a - b).abs() > tol * a.abs().max(1.0) {
                    return Err(Error::NotSymmetric { row: i, col: j });
                }
            }
        }
        Ok(Self(m))
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        Self::new(Matrix::from_rows(rows)?)
    }

    /// Symmetrizes `m` by averaging it with its transpose. Use for products
    /// such as `M M^T` that are symmetric only up to rounding.
    pub fn from_symmetric_part(m: &Matrix<T>) -> Result<Self> {
        Self::new(m.symmetric_part())
    }

    pub fn identity(d: usize) -> Self {
        Self(Matrix::identity(d))
    }

    pub fn diag(values: &[T]) -> Self {
        Self(Matrix::from_diag(values))
    }

    pub fn dim(&self) -> usize {
        self.0.rows
    }

    pub fn as_matrix(&self) -> &Matrix<T> {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix<T> {
        self.0
    }

    pub fn trace(&self) -> T {
        (0..self.dim()).map(|i| self.0[(i, i)]).sum()
    }

    pub fn scale(&self, a: T) -> Self {
        Self(self.0.scale(a))
    }

    pub fn cast<U: Real>(&self) -> SymMatrix<U> {
        SymMatrix(Matrix {
            rows: self.0.rows,
            cols: self.0.cols,
            data: self.0.data.iter().map(|x| U::of(x.as_f64())).collect(),
        })
    }
}

impl<T> Index<(usize, usize)> for SymMatrix<T> {
    type Output = T;
    #[inline]
    fn index(&self, idx: (usize, usize)) -> &T {
        &self.0[idx]
    }
}

/// Eigendecomposition `S = Q diag(values) Q^T`; the columns of `vectors`
/// are orthonormal eigenvectors. Values are sorted ascending.
#[derive(Debug, Clone)]
pub struct SymEigen<T> {
    pub values: Vec<T>,
    pub vectors: Matrix<T>,
}

impl<T: Real> SymEigen<T> {
    /// `Q diag(f(values)) Q^T`, symmetrized.
    pub fn map(&self, f: impl Fn(T) -> T) -> Matrix<T> {
        let d = self.values.len();
        let mut out = Matrix::zeros(d, d);
        for (l, &lam) in self.values.iter().enumerate() {
            let fl = f(lam);
            for i in 0..d {
                let qi = self.vectors[(i, l)] * fl;
                for j in 0..d {
                    out[(i, j)] = out[(i, j)] + qi * self.vectors[(j, l)];
                }
            }
        }
        out.symmetric_part()
    }
}

/// Cyclic Jacobi eigenvalue iteration.
pub fn sym_eigen<T: Real>(s: &SymMatrix<T>, num: &Numerics) -> SymEigen<T> {
    let n = s.dim();
    let mut a = s.0.clone();
    let mut v = Matrix::identity(n);
    let norm = frob_norm(&a);
    let stop = T::epsilon() * T::epsilon() * norm * norm;
    let two = T::of(2.0);
    // theta^2 would overflow past this
    let big = T::max_value().sqrt();

    for _ in 0..num.max_sweeps {
        let mut off = T::zero();
        for p in 0..n {
            for q in (p + 1)..n {
                off = off + a[(p, q)] * a[(p, q)];
            }
        }
        if off <= stop {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq == T::zero() {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (two * apq);
                let t = if theta.abs() > big {
                    T::one() / (two * theta)
                } else {
                    let t = T::one() / (theta.abs() + (theta * theta + T::one()).sqrt());
                    if theta < T::zero() {
                        -t
                    } else {
                        t
                    }
                };
                let c = T::one() / (t * t + T::one()).sqrt();
                let sn = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - sn * akq;
                    a[(k, q)] = sn * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - sn * aqk;
                    a[(q, k)] = sn * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - sn * vkq;
                    v[(k, q)] = sn * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(i, i)].partial_cmp(&a[(j, j)]).unwrap_or(std::cmp::Ordering::Equal));
    let values = order.iter().map(|&i| a[(i, i)]).collect();
    let mut vectors = Matrix::zeros(n, n);
    for (col, &src) in order.iter().enumerate() {
        for r in 0..n {
            vectors[(r, col)] = v[(r, src)];
        }
    }
    SymEigen { values, vectors }
}

pub fn min_eigenvalue<T: Real>(s: &SymMatrix<T>) -> T {
    sym_eigen(s, &Numerics::default()).values[0]
}

/// Symmetric PSD square root `R` with `R R = S`.
pub fn psd_sqrt<T: Real>(s: &SymMatrix<T>) -> Result<SymMatrix<T>> {
    psd_sqrt_with(s, &Numerics::default())
}

pub fn psd_sqrt_with<T: Real>(s: &SymMatrix<T>, num: &Numerics) -> Result<SymMatrix<T>> {
    let eig = sym_eigen(s, num);
    let min = eig.values[0];
    let floor = -T::of(T::tol(num.psd_clamp)) * frob_norm(s.as_matrix());
    if min < floor {
        return Err(Error::NotPsd {
            min_eigenvalue: min.as_f64(),
        });
    }
    Ok(SymMatrix(eig.map(|l| l.max(T::zero()).sqrt())))
}

/// Inverse square root `S^{-1/2}` of a symmetric positive definite matrix.
pub fn inv_sqrt<T: Real>(s: &SymMatrix<T>) -> Result<SymMatrix<T>> {
    inv_sqrt_with(s, &Numerics::default())
}

pub fn inv_sqrt_with<T: Real>(s: &SymMatrix<T>, num: &Numerics) -> Result<SymMatrix<T>> {
    let eig = sym_eigen(s, num);
    let min = eig.values[0];
    let floor = T::of(num.eig_floor) * frob_norm(s.as_matrix());
    if !(min >= floor && min > T::zero()) {
        return Err(Error::Singular(format!(
            "smallest eigenvalue {:e} below floor {:e}",
            min.as_f64(),
            floor.as_f64()
        )));
    }
    Ok(SymMatrix(eig.map(|l| T::one() / l.sqrt())))
}

/// Lower-triangular Cholesky factor `L` with `L L^T = S`.
pub fn cholesky<T: Real>(s: &SymMatrix<T>) -> Result<Matrix<T>> {
    cholesky_with(s, &Numerics::default())
}

pub fn cholesky_with<T: Real>(s: &SymMatrix<T>, num: &Numerics) -> Result<Matrix<T>> {
    let d = s.dim();
    let floor = T::of(num.pivot_floor) * s.trace() / T::of(d as f64);
    let mut l = Matrix::zeros(d, d);
    for j in 0..d {
        let mut diag = s[(j, j)];
        for k in 0..j {
            diag = diag - l[(j, k)] * l[(j, k)];
        }
        if !(diag > floor && diag > T::zero()) {
            return Err(Error::Singular(format!("cholesky pivot {j} is {:e}", diag.as_f64())));
        }
        let ljj = diag.sqrt();
        l[(j, j)] = ljj;
        for i in (j + 1)..d {
            let mut v = s[(i, j)];
            for k in 0..j {
                v = v - l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = v / ljj;
        }
    }
    Ok(l)
}

/// Solves `L y = b` for lower-triangular `L`.
pub fn forward_substitute<T: Real>(l: &Matrix<T>, b: &[T]) -> Vec<T> {
    let d = l.rows();
    let mut y = vec![T::zero(); d];
    for i in 0..d {
        let mut v = b[i];
        for k in 0..i {
            v = v - l[(i, k)] * y[k];
        }
        y[i] = v / l[(i, i)];
    }
    y
}

/// Orthonormalizes the columns of a square matrix (modified Gram-Schmidt).
pub fn orthonormalize<T: Real>(m: &Matrix<T>) -> Result<Matrix<T>> {
    let n = m.rows();
    let mut q = m.clone();
    for j in 0..m.cols() {
        for p in 0..j {
            let dot = (0..n).fold(T::zero(), |acc, r| acc + q[(r, p)] * q[(r, j)]);
            for r in 0..n {
                q[(r, j)] = q[(r, j)] - dot * q[(r, p)];
            }
        }
        let col: Vec<T> = (0..n).map(|r| q[(r, j)]).collect();
        let nrm = norm2(&col);
        if nrm <= T::epsilon() {
            return Err(Error::Singular("rank-deficient column".into()));
        }
        for r in 0..n {
            q[(r, j)] = q[(r, j)] / nrm;
        }
    }
    Ok(q)
}
