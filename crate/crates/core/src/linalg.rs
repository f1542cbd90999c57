//! Small dense linear algebra over [`Scalar`]: enough for Cholesky
//! factorization of inducing covariances and triangular solves.

use alloc::vec::Vec;
use core::ops::{Index, IndexMut};

use crate::error::invalid;
use crate::{Error, Result, Scalar};

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: alloc::vec![T::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(invalid("matrix data length does not match its shape"));
        }
        Ok(Self { rows, cols, data })
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

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<T> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn map<U: Scalar>(&self, f: impl Fn(T) -> U) -> Matrix<U> {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn values(&self) -> Matrix<f64> {
        self.map(Scalar::value)
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.cols != other.rows {
            return Err(Error::DimensionMismatch {
                expected: self.cols,
                found: other.rows,
            });
        }
        let ot = other.transpose();
        Ok(Self::from_fn(self.rows, other.cols, |i, j| {
            T::dot(self.row(i), ot.row(j))
        }))
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

/// Lower Cholesky factor of a symmetric matrix, or `None` when a pivot is not
/// strictly positive.
pub fn cholesky<T: Scalar>(a: &Matrix<T>) -> Option<Matrix<T>> {
    let n = a.rows;
    debug_assert_eq!(n, a.cols);
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let (head, tail) = l.data.split_at_mut(j * n);
        let row_j = &mut tail[..n];
        for i in 0..j {
            let row_i = &head[i * n..i * n + n];
            let s = a[(j, i)] - T::dot(&row_i[..i], &row_j[..i]);
            row_j[i] = s / row_i[i];
        }
        let pivot = a[(j, j)] - T::dot(&row_j[..j], &row_j[..j]);
        if !(pivot.value() > 0.0) || !pivot.value().is_finite() {
            return None;
        }
        row_j[j] = pivot.sqrt();
    }
    Some(l)
}

/// Diagonal jitter tried in order before a Cholesky failure is reported.
pub const JITTER_SCHEDULE: [f64; 3] = [1e-6, 1e-5, 1e-4];

/// Cholesky factor of `a + jitter·I` for the first jitter in
/// [`JITTER_SCHEDULE`] that succeeds. Returns the factor and the jitter used.
pub fn cholesky_jittered<T: Scalar>(a: &Matrix<T>) -> Result<(Matrix<T>, f64)> {
    let mut jitter = 0.0;
    for &j in &JITTER_SCHEDULE {
        jitter = j;
        let mut shifted = a.clone();
        for i in 0..a.rows {
            shifted[(i, i)] = shifted[(i, i)] + j;
        }
        if let Some(l) = cholesky(&shifted) {
            return Ok((l, j));
        }
        log::debug!("Cholesky failed with jitter {j:e}");
    }
    Err(Error::IllConditioned { jitter })
}

/// Solves `L X = B` for lower-triangular `L`.
pub fn solve_lower<T: Scalar>(l: &Matrix<T>, b: &Matrix<T>) -> Result<Matrix<T>> {
    let n = l.rows;
    if b.rows != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: b.rows,
        });
    }
    let mut out = Matrix::zeros(n, b.cols);
    let mut x: Vec<T> = Vec::with_capacity(n);
    for c in 0..b.cols {
        x.clear();
        for i in 0..n {
            let s = b[(i, c)] - T::dot(&l.row(i)[..i], &x[..i]);
            x.push(s / l[(i, i)]);
        }
        for i in 0..n {
            out[(i, c)] = x[i];
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cholesky_reconstructs() {
        let a = Matrix::from_vec(3, 3, alloc::vec![4.0, 2.0, 0.4, 2.0, 5.0, 1.0, 0.4, 1.0, 3.0])
            .unwrap();
        let l = cholesky(&a).unwrap();
        let llt = l.matmul(&l.transpose()).unwrap();
        for (x, y) in llt.data().iter().zip(a.data()) {
            assert!((x - y).abs() < 1e-12);
        }
        for i in 0..3 {
            for j in i + 1..3 {
                assert_eq!(l[(i, j)], 0.0);
            }
        }
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let a = Matrix::from_vec(2, 2, alloc::vec![1.0, 2.0, 2.0, 1.0]).unwrap();
        assert!(cholesky(&a).is_none());
        assert!(matches!(
            cholesky_jittered(&a),
            Err(Error::IllConditioned { .. })
        ));
    }

    #[test]
    fn jitter_rescues_singular_psd() {
        let a = Matrix::from_vec(2, 2, alloc::vec![1.0, 1.0, 1.0, 1.0]).unwrap();
        let (_, j) = cholesky_jittered(&a).unwrap();
        assert_eq!(j, 1e-6);
    }

    #[test]
    fn triangular_solve() {
        let l = Matrix::from_vec(2, 2, alloc::vec![2.0, 0.0, 1.0, 3.0]).unwrap();
        let b = Matrix::from_vec(2, 2, alloc::vec![2.0, 4.0, 7.0, 5.0]).unwrap();
        let x = solve_lower(&l, &b).unwrap();
        let back = l.matmul(&x).unwrap();
        for (p, q) in back.data().iter().zip(b.data()) {
            assert!((p - q).abs() < 1e-12);
        }
    }
}
