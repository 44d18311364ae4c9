//! Small row-major dense matrix types.
//!
//! Heavy kernels (products, SVD, general eigenvalues) are delegated to `faer`
//! through borrowed views; everything else is plain loops over slices.

use std::ops::{Index, IndexMut};

use faer::linalg::matmul::matmul;
use faer::{Accum, MatRef, Par};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Square complex matrix stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct CMatrix {
    dim: usize,
    data: Vec<C64>,
}

impl CMatrix {
    pub fn zeros(dim: usize) -> Self {
        Self { dim, data: vec![C64::new(0.0, 0.0); dim * dim] }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m.data[i * dim + i] = C64::new(1.0, 0.0);
        }
        m
    }

    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut data = Vec::with_capacity(dim * dim);
        for i in 0..dim {
            for j in 0..dim {
                data.push(f(i, j));
            }
        }
        Self { dim, data }
    }

    pub fn from_real_diagonal(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len());
        for (i, &v) in diag.iter().enumerate() {
            m.data[i * diag.len() + i] = C64::new(v, 0.0);
        }
        m
    }

    /// Builds from row-major data; `data.len()` must be a perfect square.
    pub fn from_row_major(data: Vec<C64>) -> Result<Self> {
        let dim = (data.len() as f64).sqrt().round() as usize;
        if dim * dim != data.len() {
            return Err(Error::DimensionMismatch { expected: dim * dim, found: data.len() });
        }
        Ok(Self { dim, data })
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [C64] {
        &mut self.data
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[C64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub(crate) fn view(&self) -> MatRef<'_, C64> {
        MatRef::from_row_major_slice(&self.data, self.dim, self.dim)
    }

    pub fn adjoint(&self) -> Self {
        let n = self.dim;
        Self::from_fn(n, |i, j| self.data[j * n + i].conj())
    }

    pub fn matmul(&self, rhs: &CMatrix) -> Self {
        assert_eq!(self.dim, rhs.dim, "matmul dimension mismatch");
        let n = self.dim;
        let mut out = CMatrix::zeros(n);
        {
            let dst = faer::MatMut::from_row_major_slice_mut(&mut out.data, n, n);
            matmul(dst, Accum::Replace, self.view(), rhs.view(), C64::new(1.0, 0.0), Par::Seq);
        }
        out
    }

    /// `self * rhs^H`
    pub fn matmul_adjoint(&self, rhs: &CMatrix) -> Self {
        assert_eq!(self.dim, rhs.dim, "matmul dimension mismatch");
        let n = self.dim;
        let mut out = CMatrix::zeros(n);
        {
            let dst = faer::MatMut::from_row_major_slice_mut(&mut out.data, n, n);
            matmul(
                dst,
                Accum::Replace,
                self.view(),
                rhs.view().adjoint(),
                C64::new(1.0, 0.0),
                Par::Seq,
            );
        }
        out
    }

    /// `self^H * rhs`
    pub fn adjoint_matmul(&self, rhs: &CMatrix) -> Self {
        assert_eq!(self.dim, rhs.dim, "matmul dimension mismatch");
        let n = self.dim;
        let mut out = CMatrix::zeros(n);
        {
            let dst = faer::MatMut::from_row_major_slice_mut(&mut out.data, n, n);
            matmul(
                dst,
                Accum::Replace,
                self.view().adjoint(),
                rhs.view(),
                C64::new(1.0, 0.0),
                Par::Seq,
            );
        }
        out
    }

    pub fn add(&self, rhs: &CMatrix) -> Self {
        let mut out = self.clone();
        out.add_scaled(rhs, 1.0);
        out
    }

    pub fn sub(&self, rhs: &CMatrix) -> Self {
        let mut out = self.clone();
        out.add_scaled(rhs, -1.0);
        out
    }

    /// `self += alpha * rhs`
    pub fn add_scaled(&mut self, rhs: &CMatrix, alpha: f64) {
        assert_eq!(self.dim, rhs.dim, "add dimension mismatch");
        for (a, b) in self.data.iter_mut().zip(&rhs.data) {
            *a += b * alpha;
        }
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        Self { dim: self.dim, data: self.data.iter().map(|v| v * alpha).collect() }
    }

    pub fn trace(&self) -> C64 {
        (0..self.dim).map(|i| self.data[i * self.dim + i]).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// Largest entry of `|A - A^H|`.
    pub fn max_asymmetry(&self) -> f64 {
        let n = self.dim;
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in i..n {
                let d = self.data[i * n + j] - self.data[j * n + i].conj();
                worst = worst.max(d.norm());
            }
        }
        worst
    }

    pub fn hermitian_part(&self) -> Self {
        let n = self.dim;
        Self::from_fn(n, |i, j| (self.data[i * n + j] + self.data[j * n + i].conj()) * 0.5)
    }

    /// Entrywise (Hadamard) product with a real matrix.
    pub fn hadamard_real(&self, kernel: &RMatrix) -> Self {
        assert_eq!((self.dim, self.dim), (kernel.rows(), kernel.cols()));
        Self {
            dim: self.dim,
            data: self.data.iter().zip(kernel.as_slice()).map(|(v, k)| v * *k).collect(),
        }
    }
}

impl Index<(usize, usize)> for CMatrix {
    type Output = C64;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        &self.data[i * self.dim + j]
    }
}

impl IndexMut<(usize, usize)> for CMatrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        &mut self.data[i * self.dim + j]
    }
}

/// Real matrix stored row-major.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl RMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        let n = diag.len();
        Self::from_fn(n, n, |i, j| if i == j { diag[i] } else { 0.0 })
    }

    /// Builds a matrix whose columns are the given vectors.
    pub fn from_columns(columns: &[Vec<f64>]) -> Self {
        let cols = columns.len();
        let rows = columns.first().map_or(0, Vec::len);
        Self::from_fn(rows, cols, |i, j| columns[j][i])
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
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.data[i * self.cols + j]).collect()
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.rows.min(self.cols)).map(|i| self.data[i * self.cols + i]).collect()
    }

    pub(crate) fn view(&self) -> MatRef<'_, f64> {
        MatRef::from_row_major_slice(&self.data, self.rows, self.cols)
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn matmul(&self, rhs: &RMatrix) -> Self {
        assert_eq!(self.cols, rhs.rows, "matmul dimension mismatch");
        let mut out = RMatrix::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == 0.0 {
                    continue;
                }
                let out_row = &mut out.data[i * rhs.cols..(i + 1) * rhs.cols];
                for (o, b) in out_row.iter_mut().zip(rhs.row(k)) {
                    *o += a * b;
                }
            }
        }
        out
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(self.cols, x.len(), "matvec dimension mismatch");
        (0..self.rows).map(|i| dot(self.row(i), x)).collect()
    }

    /// `self^T x`
    pub fn tr_matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(self.rows, x.len(), "matvec dimension mismatch");
        let mut out = vec![0.0; self.cols];
        for (i, &xi) in x.iter().enumerate() {
            for (o, a) in out.iter_mut().zip(self.row(i)) {
                *o += a * xi;
            }
        }
        out
    }

    pub fn add_scaled(&mut self, rhs: &RMatrix, alpha: f64) {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        for (a, b) in self.data.iter_mut().zip(&rhs.data) {
            *a += alpha * b;
        }
    }

    pub fn sub(&self, rhs: &RMatrix) -> Self {
        let mut out = self.clone();
        out.add_scaled(rhs, -1.0);
        out
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        Self { rows: self.rows, cols: self.cols, data: self.data.iter().map(|v| v * alpha).collect() }
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn min_entry(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                worst = worst.max((self[(i, j)] - self[(j, i)]).abs());
            }
        }
        worst
    }

    pub fn symmetric_part(&self) -> Self {
        Self::from_fn(self.rows, self.cols, |i, j| 0.5 * (self[(i, j)] + self[(j, i)]))
    }

    /// Ascending eigenvalues of the symmetric part of a square matrix.
    pub fn symmetric_eigenvalues(&self) -> Result<Vec<f64>> {
        let sym = self.symmetric_part();
        if sym.rows == 0 {
            return Ok(Vec::new());
        }
        sym.view()
            .self_adjoint_eigenvalues(faer::Side::Lower)
            .map_err(|_| Error::NoConvergence { iterations: 0 })
    }

    /// Eigenvalues of a general square matrix as `(re, im)` pairs.
    pub fn eigenvalues(&self) -> Result<Vec<(f64, f64)>> {
        if self.rows == 0 {
            return Ok(Vec::new());
        }
        let vals = self.view().eigenvalues().map_err(|_| Error::NoConvergence { iterations: 0 })?;
        Ok(vals.into_iter().map(|z| (z.re, z.im)).collect())
    }

    /// Singular values, descending.
    pub fn singular_values(&self) -> Result<Vec<f64>> {
        if self.rows == 0 || self.cols == 0 {
            return Ok(Vec::new());
        }
        self.view().singular_values().map_err(|_| Error::NoConvergence { iterations: 0 })
    }

    /// Moore-Penrose pseudo-inverse via a full SVD, zeroing singular values
    /// below `rcond * sigma_max`.
    pub fn pseudo_inverse(&self, rcond: f64) -> Result<RMatrix> {
        if self.rows == 0 || self.cols == 0 {
            return Ok(RMatrix::zeros(self.cols, self.rows));
        }
        let svd = self.view().svd().map_err(|_| Error::NoConvergence { iterations: 0 })?;
        let (u, s, v) = (svd.U(), svd.S().column_vector(), svd.V());
        let k = s.nrows();
        let sigma_max = (0..k).map(|i| s[i]).fold(0.0, f64::max);
        let cutoff = rcond * sigma_max;
        let mut out = RMatrix::zeros(self.cols, self.rows);
        for idx in 0..k {
            let sigma = s[idx];
            if sigma <= cutoff || sigma == 0.0 {
                continue;
            }
            for i in 0..self.cols {
                let vi = v[(i, idx)] / sigma;
                for j in 0..self.rows {
                    out.data[i * self.rows + j] += vi * u[(j, idx)];
                }
            }
        }
        Ok(out)
    }
}

impl Index<(usize, usize)> for RMatrix {
    type Output = f64;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for RMatrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}
