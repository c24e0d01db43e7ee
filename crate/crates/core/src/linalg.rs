//! Minimal dense linear algebra: a row-major matrix and a Cholesky solver.
//!
//! Problem sizes here are small (a few hundred rows, at most a few thousand
//! columns) so straightforward loops are sufficient.

use crate::error::{invalid, Error, Result};
use crate::scalar::{dot, Real};

/// Dense row-major matrix.
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

    /// An empty matrix with a fixed column count, to be grown with [`Matrix::push_row`].
    pub fn with_cols(cols: usize) -> Self {
        Self::zeros(0, cols)
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                context: "matrix data",
                expected: rows * cols,
                actual: data.len(),
            });
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

    #[inline]
    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<T> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn push_row(&mut self, row: &[T]) -> Result<()> {
        if row.len() != self.cols {
            return Err(Error::DimensionMismatch {
                context: "matrix row",
                expected: self.cols,
                actual: row.len(),
            });
        }
        self.data.extend_from_slice(row);
        self.rows += 1;
        Ok(())
    }

    /// `out = self * x`
    pub fn matvec_into(&self, x: &[T], out: &mut [T]) {
        debug_assert_eq!(x.len(), self.cols);
        debug_assert_eq!(out.len(), self.rows);
        for (i, o) in out.iter_mut().enumerate() {
            *o = dot(self.row(i), x);
        }
    }

    pub fn matvec(&self, x: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); self.rows];
        self.matvec_into(x, &mut out);
        out
    }

    /// `out = self^T * r`
    pub fn matvec_t_into(&self, r: &[T], out: &mut [T]) {
        debug_assert_eq!(r.len(), self.rows);
        debug_assert_eq!(out.len(), self.cols);
        out.iter_mut().for_each(|o| *o = T::zero());
        for (i, &ri) in r.iter().enumerate() {
            if ri == T::zero() {
                continue;
            }
            for (o, &a) in out.iter_mut().zip(self.row(i)) {
                *o += a * ri;
            }
        }
    }

    pub fn matvec_t(&self, r: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); self.cols];
        self.matvec_t_into(r, &mut out);
        out
    }

    /// Largest eigenvalue of `self^T self` by power iteration (a lower estimate of it).
    pub fn gram_spectral_radius(&self, iterations: usize) -> T {
        if self.rows == 0 || self.cols == 0 {
            return T::zero();
        }
        let mut v = vec![T::one(); self.cols];
        let mut av = vec![T::zero(); self.rows];
        let mut estimate = T::zero();
        for _ in 0..iterations {
            let n = dot(&v, &v).sqrt();
            if n == T::zero() {
                return T::zero();
            }
            v.iter_mut().for_each(|x| *x /= n);
            self.matvec_into(&v, &mut av);
            estimate = dot(&av, &av);
            self.matvec_t_into(&av, &mut v);
        }
        estimate
    }
}

/// In-place Cholesky factorization of a symmetric positive definite `n x n`
/// row-major matrix. On success the lower triangle holds `L` with `A = L L^T`.
pub fn cholesky_in_place<T: Real>(a: &mut [T], n: usize) -> Result<()> {
    if a.len() != n * n {
        return Err(Error::DimensionMismatch {
            context: "cholesky",
            expected: n * n,
            actual: a.len(),
        });
    }
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            d -= a[j * n + k] * a[j * n + k];
        }
        if !(d > T::zero()) || !d.is_finite() {
            return Err(invalid("matrix is not positive definite"));
        }
        let d = d.sqrt();
        a[j * n + j] = d;
        for i in (j + 1)..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= a[i * n + k] * a[j * n + k];
            }
            a[i * n + j] = s / d;
        }
    }
    Ok(())
}

/// Solves `L L^T x = b` in place given the factor from [`cholesky_in_place`].
pub fn cholesky_solve_in_place<T: Real>(l: &[T], n: usize, b: &mut [T]) {
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i * n + k] * b[k];
        }
        b[i] = s / l[i * n + i];
    }
    for i in (0..n).rev() {
        let mut s = b[i];
        for k in (i + 1)..n {
            s -= l[k * n + i] * b[k];
        }
        b[i] = s / l[i * n + i];
    }
}

/// Solves the SPD system `A x = b`, leaving `A` untouched.
pub fn solve_spd<T: Real>(a: &[T], n: usize, b: &[T]) -> Result<Vec<T>> {
    let mut l = a.to_vec();
    cholesky_in_place(&mut l, n)?;
    let mut x = b.to_vec();
    cholesky_solve_in_place(&l, n, &mut x);
    Ok(x)
}
