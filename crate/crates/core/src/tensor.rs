//! Dense row-major `f64` tensors.
//!
//! A [`Tensor`] is a plain value: a shape and a flat buffer. Every
//! operation that can fail on shapes returns [`Error::ShapeMismatch`].
//! There is no implicit broadcasting; the only mixed-shape operations are
//! scalar scaling and [`Tensor::add_row`], which adds a bias row to every
//! row of a matrix.

use std::fmt;

use rayon::prelude::*;

use crate::error::{Error, Result};

#[derive(Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Tensor{:?}", self.shape)?;
        if self.data.len() <= 16 {
            write!(f, " {:?}", self.data)?;
        }
        Ok(())
    }
}

/// Row count above which matmul work is split across the rayon pool.
const PAR_MATMUL_ROWS: usize = 64;

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.contains(&0) || shape.iter().product::<usize>() != data.len() {
            return Err(Error::InvalidShape(shape));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, 0.0)
    }

    pub fn ones(shape: &[usize]) -> Self {
        Self::full(shape, 1.0)
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        assert!(shape.iter().all(|&d| d > 0), "zero-sized dimension in {shape:?}");
        Tensor {
            shape: shape.to_vec(),
            data: vec![value; shape.iter().product()],
        }
    }

    /// A rank-0 tensor holding one value.
    pub fn scalar(value: f64) -> Self {
        Tensor {
            shape: Vec::new(),
            data: vec![value],
        }
    }

    pub fn vector(data: Vec<f64>) -> Self {
        assert!(!data.is_empty(), "empty vector");
        Tensor {
            shape: vec![data.len()],
            data,
        }
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        Self::new(vec![rows, cols], data)
    }

    /// Builds a matrix from equal-length rows.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::shape("from_rows", &[cols], &[r.len()]));
            }
            data.extend_from_slice(r);
        }
        Self::new(vec![rows.len(), cols], data)
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Self::zeros(&[n, n]);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    pub fn diag(values: &[f64]) -> Self {
        let n = values.len();
        let mut t = Self::zeros(&[n, n]);
        for (i, v) in values.iter().enumerate() {
            t.data[i * n + i] = *v;
        }
        t
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
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

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn ndim(&self) -> usize {
        self.shape.len()
    }

    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1 && self.shape.iter().all(|&d| d == 1)
    }

    /// The single value of a one-element tensor.
    pub fn item(&self) -> f64 {
        assert_eq!(self.data.len(), 1, "item() on tensor of shape {:?}", self.shape);
        self.data[0]
    }

    /// `(rows, cols)` of a rank-2 tensor.
    pub fn dims2(&self) -> Result<(usize, usize)> {
        match self.shape[..] {
            [r, c] => Ok((r, c)),
            _ => Err(Error::shape("dims2", &self.shape, &[0, 0])),
        }
    }

    pub fn rows(&self) -> usize {
        self.shape.first().copied().unwrap_or(1)
    }

    pub fn cols(&self) -> usize {
        if self.shape.len() >= 2 {
            self.shape[1..].iter().product()
        } else {
            self.data.len()
        }
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols() + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let c = self.cols();
        self.data[i * c + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let c = self.cols();
        &self.data[i * c..(i + 1) * c]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        let c = self.cols();
        &mut self.data[i * c..(i + 1) * c]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Tensor, op: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        if self.shape != other.shape {
            return Err(Error::shape(op, &self.shape, &other.shape));
        }
        Ok(Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_map(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_map(other, "sub", |a, b| a - b)
    }

    pub fn mul(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_map(other, "mul", |a, b| a * b)
    }

    pub fn scale(&self, s: f64) -> Tensor {
        self.map(|x| x * s)
    }

    /// In-place `self += alpha * other`.
    pub fn axpy(&mut self, alpha: f64, other: &Tensor) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::shape("axpy", &self.shape, &other.shape));
        }
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += alpha * b;
        }
        Ok(())
    }

    pub fn exp(&self) -> Tensor {
        self.map(f64::exp)
    }

    pub fn tanh(&self) -> Tensor {
        self.map(f64::tanh)
    }

    pub fn log(&self) -> Result<Tensor> {
        if let Some(x) = self.data.iter().find(|&&x| !(x > 0.0)) {
            return Err(Error::DomainError {
                op: "log",
                msg: format!("non-positive entry {x}"),
            });
        }
        Ok(self.map(f64::ln))
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.sum() / self.data.len() as f64
    }

    /// Maximum entry and the first index attaining it.
    pub fn max(&self) -> (f64, usize) {
        let mut best = (self.data[0], 0);
        for (i, &x) in self.data.iter().enumerate().skip(1) {
            if x > best.0 {
                best = (x, i);
            }
        }
        best
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor> {
        if shape.contains(&0) || shape.iter().product::<usize>() != self.data.len() {
            return Err(Error::shape("reshape", &self.shape, shape));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data: self.data.clone(),
        })
    }

    pub fn transpose(&self) -> Result<Tensor> {
        let (r, c) = self.dims2()?;
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = self.data[i * c + j];
            }
        }
        Tensor::new(vec![c, r], out)
    }

    pub fn matmul(&self, other: &Tensor) -> Result<Tensor> {
        let (m, k) = self.dims2()?;
        let (k2, n) = other.dims2()?;
        if k != k2 {
            return Err(Error::shape("matmul", &self.shape, &other.shape));
        }
        let mut out = vec![0.0; m * n];
        gemm(m, k, n, &self.data, false, &other.data, false, &mut out);
        Tensor::new(vec![m, n], out)
    }

    /// `selfᵀ · other` without materializing the transpose.
    pub fn t_matmul(&self, other: &Tensor) -> Result<Tensor> {
        let (k, m) = self.dims2()?;
        let (k2, n) = other.dims2()?;
        if k != k2 {
            return Err(Error::shape("t_matmul", &self.shape, &other.shape));
        }
        let mut out = vec![0.0; m * n];
        gemm(m, k, n, &self.data, true, &other.data, false, &mut out);
        Tensor::new(vec![m, n], out)
    }

    /// `self · otherᵀ` without materializing the transpose.
    pub fn matmul_t(&self, other: &Tensor) -> Result<Tensor> {
        let (m, k) = self.dims2()?;
        let (n, k2) = other.dims2()?;
        if k != k2 {
            return Err(Error::shape("matmul_t", &self.shape, &other.shape));
        }
        let mut out = vec![0.0; m * n];
        gemm(m, k, n, &self.data, false, &other.data, true, &mut out);
        Tensor::new(vec![m, n], out)
    }

    /// Adds the bias row `b` (length = column count) to every row.
    pub fn add_row(&self, b: &Tensor) -> Result<Tensor> {
        let (_, c) = self.dims2()?;
        if b.len() != c {
            return Err(Error::shape("add_row", &self.shape, &b.shape));
        }
        let mut out = self.clone();
        for row in out.data.chunks_mut(c) {
            for (x, bias) in row.iter_mut().zip(&b.data) {
                *x += bias;
            }
        }
        Ok(out)
    }

    /// Column sums of a matrix, as a vector.
    pub fn sum_rows(&self) -> Result<Tensor> {
        let (_, c) = self.dims2()?;
        let mut out = vec![0.0; c];
        for row in self.data.chunks(c) {
            for (o, x) in out.iter_mut().zip(row) {
                *o += x;
            }
        }
        Ok(Tensor::vector(out))
    }

    pub fn concat_rows(parts: &[&Tensor]) -> Result<Tensor> {
        let first = parts.first().ok_or(Error::InvalidShape(vec![]))?;
        let (_, c) = first.dims2()?;
        let mut data = Vec::new();
        let mut rows = 0;
        for p in parts {
            let (r, pc) = p.dims2()?;
            if pc != c {
                return Err(Error::shape("concat_rows", &first.shape, &p.shape));
            }
            rows += r;
            data.extend_from_slice(&p.data);
        }
        Tensor::new(vec![rows, c], data)
    }

    pub fn concat_cols(parts: &[&Tensor]) -> Result<Tensor> {
        let first = parts.first().ok_or(Error::InvalidShape(vec![]))?;
        let (r, _) = first.dims2()?;
        let mut total = 0;
        for p in parts {
            let (pr, pc) = p.dims2()?;
            if pr != r {
                return Err(Error::shape("concat_cols", &first.shape, &p.shape));
            }
            total += pc;
        }
        let mut data = Vec::with_capacity(r * total);
        for i in 0..r {
            for p in parts {
                data.extend_from_slice(p.row(i));
            }
        }
        Tensor::new(vec![r, total], data)
    }

    pub fn gather_rows(&self, idx: &[usize]) -> Result<Tensor> {
        let (r, c) = self.dims2()?;
        let mut data = Vec::with_capacity(idx.len() * c);
        for &i in idx {
            if i >= r {
                return Err(Error::shape("gather_rows", &self.shape, &[i]));
            }
            data.extend_from_slice(self.row(i));
        }
        Tensor::new(vec![idx.len(), c], data)
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        let Ok((r, c)) = self.dims2() else { return false };
        r == c && (0..r).all(|i| (0..i).all(|j| (self.at(i, j) - self.at(j, i)).abs() <= tol))
    }

    /// Max-norm distance to another tensor of the same shape.
    pub fn max_abs_diff(&self, other: &Tensor) -> Result<f64> {
        Ok(self.sub(other)?.max_abs())
    }
}

impl From<f64> for Tensor {
    fn from(v: f64) -> Self {
        Tensor::scalar(v)
    }
}

#[allow(clippy::too_many_arguments)]
fn gemm(m: usize, k: usize, n: usize, a: &[f64], a_t: bool, b: &[f64], b_t: bool, out: &mut [f64]) {
    // Row/column strides for A (m×k) and B (k×n), optionally read transposed.
    let (rsa, csa) = if a_t { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_t { (1, k as isize) } else { (n as isize, 1) };
    let threads = rayon::current_num_threads();
    if threads > 1 && m >= PAR_MATMUL_ROWS {
        let chunk = m.div_ceil(threads);
        out.par_chunks_mut(chunk * n).enumerate().for_each(|(ci, block)| {
            let r0 = ci * chunk;
            let rows = block.len() / n;
            // SAFETY: each block covers rows r0..r0+rows of A and of the output.
            unsafe {
                matrixmultiply::dgemm(
                    rows,
                    k,
                    n,
                    1.0,
                    a.as_ptr().offset(r0 as isize * rsa),
                    rsa,
                    csa,
                    b.as_ptr(),
                    rsb,
                    csb,
                    0.0,
                    block.as_mut_ptr(),
                    n as isize,
                    1,
                );
            }
        });
    } else {
        // SAFETY: slices have exactly m*k, k*n and m*n elements for the given strides.
        unsafe {
            matrixmultiply::dgemm(
                m,
                k,
                n,
                1.0,
                a.as_ptr(),
                rsa,
                csa,
                b.as_ptr(),
                rsb,
                csb,
                0.0,
                out.as_mut_ptr(),
                n as isize,
                1,
            );
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_identity() {
        let i = Tensor::identity(2);
        let x = Tensor::from_rows(&[[3.0], [4.0]]).unwrap();
        assert_eq!(i.matmul(&x).unwrap(), x);
    }

    #[test]
    fn sum_and_exp() {
        assert_eq!(Tensor::vector(vec![1.0, 2.0, 3.0]).sum(), 6.0);
        assert_eq!(Tensor::vector(vec![0.0, 0.0]).exp().data(), &[1.0, 1.0]);
    }

    #[test]
    fn shape_errors() {
        let a = Tensor::zeros(&[2, 3]);
        let b = Tensor::zeros(&[2, 3]);
        assert!(matches!(a.matmul(&b), Err(Error::ShapeMismatch { .. })));
        assert!(matches!(a.add(&Tensor::zeros(&[3, 2])), Err(Error::ShapeMismatch { .. })));
        assert!(Tensor::new(vec![2, 0], vec![]).is_err());
        assert!(Tensor::new(vec![2, 2], vec![1.0; 3]).is_err());
    }

    #[test]
    fn log_domain() {
        assert!(matches!(
            Tensor::vector(vec![1.0, 0.0]).log(),
            Err(Error::DomainError { op: "log", .. })
        ));
        assert!(Tensor::vector(vec![1.0, 2.0]).log().is_ok());
    }

    #[test]
    fn transposed_products_agree() {
        let a = Tensor::matrix(3, 2, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let b = Tensor::matrix(3, 4, (0..12).map(|x| x as f64).collect()).unwrap();
        let expect = a.transpose().unwrap().matmul(&b).unwrap();
        assert_eq!(a.t_matmul(&b).unwrap(), expect);
        let c = Tensor::matrix(4, 2, (0..8).map(|x| x as f64 * 0.5).collect()).unwrap();
        let expect = a.matmul(&c.transpose().unwrap()).unwrap();
        assert_eq!(a.matmul_t(&c).unwrap(), expect);
    }

    #[test]
    fn concat_and_gather() {
        let a = Tensor::from_rows(&[[1.0, 2.0]]).unwrap();
        let b = Tensor::from_rows(&[[3.0, 4.0]]).unwrap();
        let r = Tensor::concat_rows(&[&a, &b]).unwrap();
        assert_eq!(r.shape(), &[2, 2]);
        let c = Tensor::concat_cols(&[&a, &b]).unwrap();
        assert_eq!(c.data(), &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(r.gather_rows(&[1, 1, 0]).unwrap().data(), &[3.0, 4.0, 3.0, 4.0, 1.0, 2.0]);
    }
}
