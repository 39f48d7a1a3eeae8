//! Compressed sparse row matrices, used for fixed graph propagation operators.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub struct Csr {
    rows: usize,
    cols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl Csr {
    /// Builds from `(row, col, value)` triplets. Duplicates are summed.
    pub fn from_triplets(rows: usize, cols: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        let mut sorted = triplets.to_vec();
        sorted.sort_by_key(|a| (a.0, a.1));
        let mut indptr = vec![0; rows + 1];
        let mut indices = Vec::with_capacity(sorted.len());
        let mut values: Vec<f64> = Vec::with_capacity(sorted.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in sorted {
            if r >= rows || c >= cols {
                return Err(Error::shape("csr", &[rows, cols], &[r, c]));
            }
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
                continue;
            }
            indices.push(c);
            values.push(v);
            indptr[r + 1] += 1;
            last = Some((r, c));
        }
        for i in 0..rows {
            indptr[i + 1] += indptr[i];
        }
        Ok(Csr {
            rows,
            cols,
            indptr,
            indices,
            values,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// `(col, value)` entries of one row.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.indptr[i]..self.indptr[i + 1];
        self.indices[span.clone()].iter().copied().zip(self.values[span].iter().copied())
    }

    pub fn transpose(&self) -> Csr {
        let mut trip = Vec::with_capacity(self.nnz());
        for i in 0..self.rows {
            for (j, v) in self.row(i) {
                trip.push((j, i, v));
            }
        }
        Csr::from_triplets(self.cols, self.rows, &trip).expect("transpose of a valid matrix")
    }

    /// Sparse × dense product.
    pub fn matmul(&self, x: &Tensor) -> Result<Tensor> {
        let (r, c) = x.dims2()?;
        if r != self.cols {
            return Err(Error::shape("spmm", &[self.rows, self.cols], x.shape()));
        }
        let mut out = Tensor::zeros(&[self.rows, c]);
        for i in 0..self.rows {
            let dst = out.row_mut(i);
            for (j, v) in self.row(i) {
                for (o, xv) in dst.iter_mut().zip(x.row(j)) {
                    *o += v * xv;
                }
            }
        }
        Ok(out)
    }

    pub fn to_dense(&self) -> Tensor {
        let mut t = Tensor::zeros(&[self.rows, self.cols]);
        for i in 0..self.rows {
            for (j, v) in self.row(i) {
                t.set(i, j, v);
            }
        }
        t
    }
}
