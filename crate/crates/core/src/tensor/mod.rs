//! Dense row-major matrices with the handful of kernels the models need,
//! each paired with its hand-written backward rule.
//!
//! All reductions run in a fixed order, so results are bit-reproducible.

mod adam;
mod ops;

use rand::Rng;

use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;

pub use adam::AdamState;
pub use ops::{
    dense_backward, dense_forward, leaky_relu, leaky_relu_backward, mse_loss, mse_loss_backward,
    DenseGrads,
};

pub type SparseMatrix = CsrMatrix<f64>;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Tensor {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::dims(format!("{rows}x{cols} = {} values", rows * cols), data.len()));
        }
        Ok(Tensor { rows, cols, data })
    }

    /// Builds from equally long rows. Panics on ragged input.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Self {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            assert_eq!(r.as_ref().len(), cols, "ragged rows");
            data.extend_from_slice(r.as_ref());
        }
        Tensor {
            rows: rows.len(),
            cols,
            data,
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Tensor::zeros(n, n);
        for i in 0..n {
            t[(i, i)] = 1.0;
        }
        t
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn fill(&mut self, value: f64) {
        self.data.iter_mut().for_each(|x| *x = value);
    }

    pub fn scale(&mut self, factor: f64) {
        self.data.iter_mut().for_each(|x| *x *= factor);
    }

    pub fn add_assign(&mut self, other: &Tensor) {
        assert_eq!(self.shape(), other.shape(), "add_assign shape");
        self.data.iter_mut().zip(&other.data).for_each(|(a, b)| *a += b);
    }

    /// Column sums as a `1 x cols` tensor.
    pub fn column_sums(&self) -> Tensor {
        let mut out = Tensor::zeros(1, self.cols);
        for r in 0..self.rows {
            for (o, x) in out.data.iter_mut().zip(self.row(r)) {
                *o += x;
            }
        }
        out
    }

    /// Horizontal concatenation.
    pub fn hcat(parts: &[&Tensor]) -> Result<Tensor> {
        let rows = parts.first().map_or(0, |p| p.rows);
        if let Some(p) = parts.iter().find(|p| p.rows != rows) {
            return Err(Error::dims(format!("{rows} rows"), p.rows));
        }
        let cols = parts.iter().map(|p| p.cols).sum();
        let mut out = Tensor::zeros(rows, cols);
        for r in 0..rows {
            let mut c0 = 0;
            for p in parts {
                out.row_mut(r)[c0..c0 + p.cols].copy_from_slice(p.row(r));
                c0 += p.cols;
            }
        }
        Ok(out)
    }

    /// Columns `start..start + width`.
    pub fn column_slice(&self, start: usize, width: usize) -> Tensor {
        assert!(start + width <= self.cols);
        let mut out = Tensor::zeros(self.rows, width);
        for r in 0..self.rows {
            out.row_mut(r).copy_from_slice(&self.row(r)[start..start + width]);
        }
        out
    }

    pub fn vstack(parts: &[&Tensor]) -> Result<Tensor> {
        let cols = parts.first().map_or(0, |p| p.cols);
        if let Some(p) = parts.iter().find(|p| p.cols != cols) {
            return Err(Error::dims(format!("{cols} cols"), p.cols));
        }
        let mut data = Vec::with_capacity(parts.iter().map(|p| p.len()).sum());
        for p in parts {
            data.extend_from_slice(&p.data);
        }
        Ok(Tensor {
            rows: data.len() / cols.max(1),
            cols,
            data,
        })
    }

    /// `self * other`.
    pub fn matmul(&self, other: &Tensor) -> Result<Tensor> {
        gemm(self, false, other, false)
    }

    /// `self^T * other`.
    pub fn matmul_tn(&self, other: &Tensor) -> Result<Tensor> {
        gemm(self, true, other, false)
    }

    /// `self * other^T`.
    pub fn matmul_nt(&self, other: &Tensor) -> Result<Tensor> {
        gemm(self, false, other, true)
    }

    /// Element-wise absolute maximum, handy in tests.
    pub fn max_abs_diff(&self, other: &Tensor) -> f64 {
        assert_eq!(self.shape(), other.shape());
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0, |m, (a, b)| f64::max(m, (a - b).abs()))
    }
}

impl std::ops::Index<(usize, usize)> for Tensor {
    type Output = f64;
    fn index(&self, (r, c): (usize, usize)) -> &f64 {
        &self.data[r * self.cols + c]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Tensor {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut f64 {
        &mut self.data[r * self.cols + c]
    }
}

fn gemm(a: &Tensor, ta: bool, b: &Tensor, tb: bool) -> Result<Tensor> {
    let (m, k) = if ta { (a.cols, a.rows) } else { (a.rows, a.cols) };
    let (k2, n) = if tb { (b.cols, b.rows) } else { (b.rows, b.cols) };
    if k != k2 {
        return Err(Error::dims(format!("inner dimension {k}"), k2));
    }
    let mut c = Tensor::zeros(m, n);
    if m == 0 || n == 0 || k == 0 {
        return Ok(c);
    }
    let (rsa, csa) = if ta { (1, a.cols as isize) } else { (a.cols as isize, 1) };
    let (rsb, csb) = if tb { (1, b.cols as isize) } else { (b.cols as isize, 1) };
    // SAFETY: strides describe the exact row-major buffers of `a`, `b`, `c`,
    // whose lengths match the m/k/n extents checked above.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.data.as_ptr(),
            rsa,
            csa,
            b.data.as_ptr(),
            rsb,
            csb,
            0.0,
            c.data.as_mut_ptr(),
            n as isize,
            1,
        );
    }
    Ok(c)
}

/// Sparse-dense product `A X`.
///
/// Within each row the terms are accumulated in an order fixed by their
/// values (`a_ij`, then the entries of row `j` of `X`), not by column
/// index, so relabeling the graph permutes the output rows bit for bit.
pub fn spmm(a: &SparseMatrix, x: &Tensor) -> Result<Tensor> {
    if a.cols() != x.rows {
        return Err(Error::dims(format!("{} rows", a.cols()), x.rows));
    }
    let mut out = Tensor::zeros(a.rows(), x.cols);
    let mut entries: Vec<(usize, f64)> = Vec::new();
    for r in 0..a.rows() {
        entries.clear();
        entries.extend(a.row(r));
        entries.sort_unstable_by(|&(i, u), &(j, v)| {
            u.total_cmp(&v).then_with(|| {
                x.row(i)
                    .iter()
                    .zip(x.row(j))
                    .map(|(p, q)| p.total_cmp(q))
                    .find(|o| o.is_ne())
                    .unwrap_or(std::cmp::Ordering::Equal)
            })
        });
        let dst = &mut out.data[r * x.cols..(r + 1) * x.cols];
        for &(c, v) in &entries {
            for (d, s) in dst.iter_mut().zip(x.row(c)) {
                *d += v * s;
            }
        }
    }
    Ok(out)
}

/// Backward of [`spmm`] with respect to `X`: `A^T G`.
pub fn spmm_backward(a: &SparseMatrix, grad: &Tensor) -> Result<Tensor> {
    if a.rows() != grad.rows {
        return Err(Error::dims(format!("{} rows", a.rows()), grad.rows));
    }
    let mut out = Tensor::zeros(a.cols(), grad.cols);
    for r in 0..a.rows() {
        let src = grad.row(r);
        for (c, v) in a.row(r) {
            let dst = &mut out.data[c * grad.cols..(c + 1) * grad.cols];
            for (d, s) in dst.iter_mut().zip(src) {
                *d += v * s;
            }
        }
    }
    Ok(out)
}

/// Uniform in `±sqrt(6 / (fan_in + fan_out))` with `fan_in = rows`.
pub fn glorot_init<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Tensor {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    let data = (0..rows * cols).map(|_| rng.random_range(-bound..=bound)).collect();
    Tensor { rows, cols, data }
}
