use crate::error::{Error, Result};

/// Dense row-major matrix of finite `f64` values.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::shape("Matrix::new", (rows, cols), data.len()));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Data(format!(
                "non-finite entry at row {}, column {}",
                pos / cols.max(1),
                pos % cols.max(1)
            )));
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from equally sized rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != cols {
                return Err(Error::shape("Matrix::from_rows", (0, cols), (i, row.len())));
            }
            data.extend_from_slice(row);
        }
        Self::new(rows.len(), cols, data)
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
            m.data[i * n + i] = 1.0;
        }
        m
    }

    /// Internal constructor for buffers whose finiteness is checked elsewhere.
    pub(crate) fn from_vec_unchecked(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), rows * cols);
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub(crate) fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub(crate) fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> + '_ {
        (0..self.rows).map(move |i| self.row(i))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Copies the listed rows, in the order given.
    pub fn select_rows(&self, indices: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Matrix::from_vec_unchecked(indices.len(), self.cols, data)
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = vec![0.0; self.data.len()];
        for i in 0..self.rows {
            for (j, &v) in self.row(i).iter().enumerate() {
                out[j * self.rows + i] = v;
            }
        }
        Matrix::from_vec_unchecked(self.cols, self.rows, out)
    }

    /// Standard product `self · other`, rejecting results that overflow.
    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::shape("matmul", self.shape(), other.shape()));
        }
        let out = self.matmul_unchecked(other);
        if !out.is_finite() {
            return Err(Error::Data("matmul produced a non-finite entry".into()));
        }
        Ok(out)
    }

    pub(crate) fn matmul_unchecked(&self, other: &Matrix) -> Matrix {
        debug_assert_eq!(self.cols, other.rows);
        let mut out = vec![0.0; self.rows * other.cols];
        gemm_accumulate(self.rows, self.cols, other.cols, &self.data, &other.data, &mut out);
        Matrix::from_vec_unchecked(self.rows, other.cols, out)
    }

    /// `selfᵀ · other` without the caller materialising the transpose.
    pub(crate) fn matmul_tn(&self, other: &Matrix) -> Matrix {
        debug_assert_eq!(self.rows, other.rows);
        self.transpose().matmul_unchecked(other)
    }

    /// `self · otherᵀ`.
    pub(crate) fn matmul_nt(&self, other: &Matrix) -> Matrix {
        debug_assert_eq!(self.cols, other.cols);
        self.matmul_unchecked(&other.transpose())
    }
}

/// Free-function form of [`Matrix::matmul`].
pub fn matmul(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    a.matmul(b)
}

/// `c += a · b` for row-major `a` (m×k), `b` (k×n), `c` (m×n).
///
/// Every output entry accumulates its products in ascending `k` order, one
/// addition at a time, so the result is bit-identical to the textbook triple
/// loop. Zero entries of `a` are skipped; adding `0·b` to a finite sum is a
/// no-op apart from the sign of an exact zero.
fn gemm_accumulate(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], c: &mut [f64]) {
    let mut nonzero: Vec<usize> = Vec::with_capacity(k);
    for i in 0..m {
        let a_row = &a[i * k..(i + 1) * k];
        let c_row = &mut c[i * n..(i + 1) * n];
        nonzero.clear();
        nonzero.extend(a_row.iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(p, _)| p));

        let mut chunks = nonzero.chunks_exact(4);
        for quad in &mut chunks {
            let (p0, p1, p2, p3) = (quad[0], quad[1], quad[2], quad[3]);
            let (a0, a1, a2, a3) = (a_row[p0], a_row[p1], a_row[p2], a_row[p3]);
            let b0 = &b[p0 * n..(p0 + 1) * n];
            let b1 = &b[p1 * n..(p1 + 1) * n];
            let b2 = &b[p2 * n..(p2 + 1) * n];
            let b3 = &b[p3 * n..(p3 + 1) * n];
            for j in 0..n {
                c_row[j] = c_row[j] + a0 * b0[j] + a1 * b1[j] + a2 * b2[j] + a3 * b3[j];
            }
        }
        for &p in chunks.remainder() {
            let ap = a_row[p];
            let bp = &b[p * n..(p + 1) * n];
            for (cj, bj) in c_row.iter_mut().zip(bp) {
                *cj += ap * bj;
            }
        }
    }
}
