//! Compressed sparse row adjacency.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Square CSR matrix. Column indices inside each row are strictly increasing.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseAdjacency {
    n: usize,
    offsets: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl SparseAdjacency {
    /// Assembles a CSR matrix, checking the layout invariants.
    pub fn from_csr(
        n: usize,
        offsets: Vec<usize>,
        indices: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self> {
        let bad = |msg: &str| Err(Error::InvalidConfig(alloc::format!("csr: {msg}")));
        if offsets.len() != n + 1 || offsets[0] != 0 || offsets[n] != indices.len() {
            return bad("row offsets do not span the index buffer");
        }
        if indices.len() != values.len() {
            return bad("index and value buffers differ in length");
        }
        for r in 0..n {
            if offsets[r] > offsets[r + 1] {
                return bad("row offsets decrease");
            }
            let row = &indices[offsets[r]..offsets[r + 1]];
            if row.windows(2).any(|w| w[0] >= w[1]) || row.iter().any(|&c| c >= n) {
                return bad("column indices not strictly increasing or out of range");
            }
        }
        Ok(Self {
            n,
            offsets,
            indices,
            values,
        })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            n,
            offsets: (0..=n).collect(),
            indices: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `(column, value)` pairs of row `r`.
    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.offsets[r]..self.offsets[r + 1];
        self.indices[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let span = self.offsets[r]..self.offsets[r + 1];
        match self.indices[span.clone()].binary_search(&c) {
            Ok(pos) => self.values[span.start + pos],
            Err(_) => 0.0,
        }
    }

    pub fn to_dense(&self) -> Matrix {
        let mut m = Matrix::zeros(self.n, self.n);
        for r in 0..self.n {
            for (c, v) in self.row(r) {
                m.set(r, c, v);
            }
        }
        m
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.n).all(|r| self.row(r).all(|(c, v)| self.get(c, r) == v))
    }

    /// `self * dense`.
    pub fn mul_dense(&self, dense: &Matrix) -> Result<Matrix> {
        if dense.rows() != self.n {
            return Err(Error::ShapeMismatch {
                op: "spmm",
                left: (self.n, self.n),
                right: dense.shape(),
            });
        }
        let d = dense.cols();
        let mut out = Matrix::zeros(self.n, d);
        for r in 0..self.n {
            let out_row = out.row_mut(r);
            for (c, v) in self.row(r) {
                for (o, &x) in out_row.iter_mut().zip(dense.row(c)) {
                    *o += v * x;
                }
            }
        }
        Ok(out)
    }

    /// `out += selfᵀ * g`.
    pub(crate) fn mul_transpose_acc(&self, g: &Matrix, out: &mut Matrix) {
        for r in 0..self.n {
            let g_row = g.row(r);
            for (c, v) in self.row(r) {
                for (o, &x) in out.row_mut(c).iter_mut().zip(g_row) {
                    *o += v * x;
                }
            }
        }
    }
}
