//! Dense 3-way tensor storage and multilinear algebra primitives.
//!
//! The fixed linearization order for tensor data is k-major, then j, then i
//! with i fastest: entry (i, j, k) lives at `i + I*j + I*J*k`. Under this
//! order `vec_tensor(t)` equals the column-by-column vectorization of
//! `unfold_wide(t)`, so the flattened decision vector and the wide unfolding
//! used by the ALS updates are mutually consistent.

use crate::error::{Error, Result};

/// Real-valued 3-way array.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseTensor3 {
    dims: (usize, usize, usize),
    data: Vec<f64>,
}

impl DenseTensor3 {
    /// Build a tensor from dims and data in the fixed linearization order.
    ///
    /// Validates the length and rejects NaN/Inf entries eagerly; all other
    /// operations assume valid inputs.
    pub fn new(dims: (usize, usize, usize), data: Vec<f64>) -> Result<Self> {
        let (i, j, k) = dims;
        if i == 0 || j == 0 || k == 0 {
            return Err(Error::Dimension(format!(
                "tensor dims must be positive, got {i}x{j}x{k}"
            )));
        }
        if data.len() != i * j * k {
            return Err(Error::Dimension(format!(
                "tensor data length {} does not match {i}x{j}x{k}",
                data.len()
            )));
        }
        if let Some((idx, &value)) = data.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFinite { index: idx, value });
        }
        Ok(Self { dims, data })
    }

    /// Tensor with every entry zero.
    pub fn zeros(dims: (usize, usize, usize)) -> Self {
        Self::new(dims, vec![0.0; dims.0 * dims.1 * dims.2]).expect("zero tensor is always valid")
    }

    /// Build entry-by-entry from a function of (i, j, k).
    pub fn from_fn(dims: (usize, usize, usize), f: impl Fn(usize, usize, usize) -> f64) -> Result<Self> {
        let (ni, nj, nk) = dims;
        let mut data = Vec::with_capacity(ni * nj * nk);
        for k in 0..nk {
            for j in 0..nj {
                for i in 0..ni {
                    data.push(f(i, j, k));
                }
            }
        }
        Self::new(dims, data)
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        let (ni, nj, _) = self.dims;
        self.data[i + ni * j + ni * nj * k]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Square root of the sum of all entries squared.
    pub fn norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    /// The I x J matrix of entries with third index `k` (0-based).
    pub fn frontal_slice(&self, k: usize) -> Result<DenseMatrix> {
        let (ni, nj, nk) = self.dims;
        if k >= nk {
            return Err(Error::IndexOutOfRange { index: k, bound: nk });
        }
        let mut out = DenseMatrix::zeros(ni, nj);
        for j in 0..nj {
            for i in 0..ni {
                out.set(i, j, self.data[i + ni * j + ni * nj * k]);
            }
        }
        Ok(out)
    }

    /// Horizontal concatenation of frontal slices: [X_1 X_2 ... X_K], I x J*K.
    pub fn unfold_wide(&self) -> DenseMatrix {
        let (ni, nj, nk) = self.dims;
        let mut out = DenseMatrix::zeros(ni, nj * nk);
        for k in 0..nk {
            for j in 0..nj {
                for i in 0..ni {
                    out.set(i, j + nj * k, self.data[i + ni * j + ni * nj * k]);
                }
            }
        }
        out
    }

    /// Vectorization in the fixed linearization order; inverse is [`DenseTensor3::new`].
    pub fn vec_tensor(&self) -> RealVector {
        RealVector::new(self.data.clone())
    }

    /// Frobenius distance to another tensor of the same shape.
    pub fn distance(&self, other: &DenseTensor3) -> Result<f64> {
        if self.dims != other.dims {
            return Err(Error::Dimension(format!(
                "shape mismatch: {:?} vs {:?}",
                self.dims, other.dims
            )));
        }
        let sum = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>();
        Ok(sum.sqrt())
    }
}

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Dimension(format!(
                "matrix dims must be positive, got {rows}x{cols}"
            )));
        }
        if data.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "matrix data length {} does not match {rows}x{cols}",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
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

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn column(&self, c: usize) -> RealVector {
        RealVector::new((0..self.rows).map(|r| self.get(r, c)).collect())
    }

    pub fn transpose(&self) -> DenseMatrix {
        DenseMatrix::from_fn(self.cols, self.rows, |r, c| self.get(c, r))
    }

    /// Matrix product self * other.
    pub fn matmul(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        if self.cols != other.rows {
            return Err(Error::Dimension(format!(
                "matmul shape mismatch: {}x{} * {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = DenseMatrix::zeros(self.rows, other.cols);
        for r in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(r, k);
                if a == 0.0 {
                    continue;
                }
                for c in 0..other.cols {
                    out.data[r * other.cols + c] += a * other.get(k, c);
                }
            }
        }
        Ok(out)
    }

    /// Matrix product self * other^T without materializing the transpose.
    pub fn matmul_transpose_b(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        if self.cols != other.cols {
            return Err(Error::Dimension(format!(
                "matmul_transpose_b shape mismatch: {}x{} * ({}x{})^T",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = DenseMatrix::zeros(self.rows, other.rows);
        for r in 0..self.rows {
            for c in 0..other.rows {
                let mut acc = 0.0;
                for k in 0..self.cols {
                    acc += self.get(r, k) * other.get(c, k);
                }
                out.set(r, c, acc);
            }
        }
        Ok(out)
    }

    /// Matrix product self^T * other.
    pub fn matmul_transpose_a(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        if self.rows != other.rows {
            return Err(Error::Dimension(format!(
                "matmul_transpose_a shape mismatch: ({}x{})^T * {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = DenseMatrix::zeros(self.cols, other.cols);
        for k in 0..self.rows {
            for r in 0..self.cols {
                let a = self.get(k, r);
                if a == 0.0 {
                    continue;
                }
                for c in 0..other.cols {
                    out.data[r * other.cols + c] += a * other.get(k, c);
                }
            }
        }
        Ok(out)
    }

    /// Scale row r by diag[r]: diag(d) * self.
    pub fn scale_rows(&self, diag: &[f64]) -> Result<DenseMatrix> {
        if diag.len() != self.rows {
            return Err(Error::Dimension(format!(
                "scale_rows expects {} diagonal values, got {}",
                self.rows,
                diag.len()
            )));
        }
        let mut out = self.clone();
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[r * self.cols + c] *= diag[r];
            }
        }
        Ok(out)
    }

    /// Scale column c by diag[c]: self * diag(d).
    pub fn scale_cols(&self, diag: &[f64]) -> Result<DenseMatrix> {
        if diag.len() != self.cols {
            return Err(Error::Dimension(format!(
                "scale_cols expects {} diagonal values, got {}",
                self.cols,
                diag.len()
            )));
        }
        let mut out = self.clone();
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[r * self.cols + c] *= diag[c];
            }
        }
        Ok(out)
    }

    /// Matrix-vector product self * v.
    pub fn matvec(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.cols {
            return Err(Error::Dimension(format!(
                "matvec expects length {}, got {}",
                self.cols,
                v.len()
            )));
        }
        let mut out = vec![0.0; self.rows];
        for r in 0..self.rows {
            let row = &self.data[r * self.cols..(r + 1) * self.cols];
            out[r] = row.iter().zip(v).map(|(a, b)| a * b).sum();
        }
        Ok(out)
    }

    /// Matrix-vector product self^T * v.
    pub fn matvec_transpose(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.rows {
            return Err(Error::Dimension(format!(
                "matvec_transpose expects length {}, got {}",
                self.rows,
                v.len()
            )));
        }
        let mut out = vec![0.0; self.cols];
        for r in 0..self.rows {
            let scale = v[r];
            if scale == 0.0 {
                continue;
            }
            for c in 0..self.cols {
                out[c] += scale * self.data[r * self.cols + c];
            }
        }
        Ok(out)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }
}

/// Real vector with explicit length.
#[derive(Debug, Clone, PartialEq)]
pub struct RealVector {
    data: Vec<f64>,
}

impl RealVector {
    pub fn new(data: Vec<f64>) -> Self {
        Self { data }
    }

    pub fn zeros(len: usize) -> Self {
        Self { data: vec![0.0; len] }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn dot(&self, other: &RealVector) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    /// self += alpha * other.
    pub fn axpy(&mut self, alpha: f64, other: &RealVector) {
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += alpha * b;
        }
    }

    pub fn scale(&mut self, alpha: f64) {
        for a in &mut self.data {
            *a *= alpha;
        }
    }

    /// self - other as a new vector.
    pub fn sub(&self, other: &RealVector) -> RealVector {
        RealVector::new(
            self.data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a - b)
                .collect(),
        )
    }
}

impl std::ops::Index<usize> for RealVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.data[i]
    }
}

impl std::ops::IndexMut<usize> for RealVector {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.data[i]
    }
}

/// Outer product u ∘ v: result[i][j] = u[i] * v[j].
pub fn outer(u: &RealVector, v: &RealVector) -> DenseMatrix {
    DenseMatrix::from_fn(u.len(), v.len(), |i, j| u[i] * v[j])
}

/// Kronecker product: block (i, j) of the result is a[i][j] * b.
pub fn kronecker(a: &DenseMatrix, b: &DenseMatrix) -> DenseMatrix {
    let mut out = DenseMatrix::zeros(a.rows() * b.rows(), a.cols() * b.cols());
    for ai in 0..a.rows() {
        for aj in 0..a.cols() {
            let scale = a.get(ai, aj);
            if scale == 0.0 {
                continue;
            }
            for bi in 0..b.rows() {
                for bj in 0..b.cols() {
                    out.set(ai * b.rows() + bi, aj * b.cols() + bj, scale * b.get(bi, bj));
                }
            }
        }
    }
    out
}

/// Khatri-Rao product: column r of the result is kron(a[:,r], b[:,r]).
pub fn khatri_rao(a: &DenseMatrix, b: &DenseMatrix) -> Result<DenseMatrix> {
    if a.cols() != b.cols() {
        return Err(Error::Dimension(format!(
            "khatri_rao column mismatch: {} vs {}",
            a.cols(),
            b.cols()
        )));
    }
    let mut out = DenseMatrix::zeros(a.rows() * b.rows(), a.cols());
    for c in 0..a.cols() {
        for ai in 0..a.rows() {
            let scale = a.get(ai, c);
            for bi in 0..b.rows() {
                out.set(ai * b.rows() + bi, c, scale * b.get(bi, c));
            }
        }
    }
    Ok(out)
}
