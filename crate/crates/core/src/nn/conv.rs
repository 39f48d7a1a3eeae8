//! Convolutions and pooling defined by explicit index functions.
//!
//! A one-dimensional convolution is
//! `conv1d(x)_i = Σ_j K[α(i, j)] · x[a(i, j)] + b_i` with `j` ranging over the
//! input positions and every out-of-range index reading as zero. Indices here
//! are zero-based; an index function may return any integer, and values
//! outside `0..len` select the zero extension. Stride/padding style layouts
//! are just particular index tables, built by the `valid`/`same`
//! constructors.

use std::collections::HashSet;
use std::sync::Arc;

use crate::autodiff::{apply_conv, apply_pool, ConvTable, PoolKind, PoolTable};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// An index function `[rows] × [cols] → Z`, stored as a dense table.
#[derive(Clone, Debug, PartialEq)]
pub struct IndexFn {
    rows: usize,
    cols: usize,
    values: Vec<i64>,
}

impl IndexFn {
    pub fn from_fn(rows: usize, cols: usize, f: impl Fn(usize, usize) -> i64) -> Self {
        let mut values = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                values.push(f(i, j));
            }
        }
        IndexFn { rows, cols, values }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> i64 {
        self.values[i * self.cols + j]
    }

    /// The index if it falls in `0..len`.
    pub fn in_range(&self, i: usize, j: usize, len: usize) -> Option<usize> {
        let v = self.get(i, j);
        (v >= 0 && (v as usize) < len).then_some(v as usize)
    }

    fn check_injective_rows(&self, name: &str) -> Result<()> {
        for i in 0..self.rows {
            let mut seen = HashSet::with_capacity(self.cols);
            for j in 0..self.cols {
                if !seen.insert(self.get(i, j)) {
                    return Err(Error::Config(format!("index function {name}({i}, ·) is not injective")));
                }
            }
        }
        Ok(())
    }
}

/// How a standard convolution table was laid out; needed to checkpoint it.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ConvLayout {
    Valid { stride: usize },
    Same,
}

#[derive(Clone, Debug)]
pub struct Conv1dSpec {
    pub kernel: Tensor,
    pub bias: Tensor,
    a: IndexFn,
    alpha: IndexFn,
    table: Arc<ConvTable>,
    layout: Option<ConvLayout>,
}

impl Conv1dSpec {
    /// General convolution `R^d → R^l` with `l = a.rows()` and `d = a.cols()`.
    pub fn new(kernel: Tensor, bias: Tensor, a: IndexFn, alpha: IndexFn) -> Result<Self> {
        let (l, d) = (a.rows, a.cols);
        if alpha.rows != l || alpha.cols != d {
            return Err(Error::shape("conv1d index functions", &[l, d], &[alpha.rows, alpha.cols]));
        }
        if bias.len() != l {
            return Err(Error::shape("conv1d bias", &[l], bias.shape()));
        }
        a.check_injective_rows("a")?;
        let r = kernel.len();
        let taps = (0..l)
            .map(|i| {
                (0..d)
                    .filter_map(|j| Some((alpha.in_range(i, j, r)?, a.in_range(i, j, d)?)))
                    .collect()
            })
            .collect();
        let table = Arc::new(ConvTable {
            in_len: d,
            kernel_len: r,
            taps,
        });
        Ok(Conv1dSpec {
            kernel: kernel.reshape(&[r])?,
            bias: bias.reshape(&[l])?,
            a,
            alpha,
            table,
            layout: None,
        })
    }

    /// `x ↦ (Σ_{j<r} K_j x_{i+j+1})_i` for `i < d − r`, no bias.
    pub fn simple(kernel: Tensor, d: usize) -> Result<Self> {
        let r = kernel.len();
        if r >= d {
            return Err(Error::Config(format!("filter length {r} must be < input length {d}")));
        }
        let l = d - r;
        let a = IndexFn::from_fn(l, d, |i, j| (i + j + 1) as i64);
        let alpha = IndexFn::from_fn(l, d, |_, j| j as i64);
        Self::new(kernel, Tensor::zeros(&[l]), a, alpha)
    }

    /// Window `i` starts at `i · stride`; no padding.
    pub fn valid(kernel: Tensor, d: usize, stride: usize) -> Result<Self> {
        let r = kernel.len();
        if r > d || stride == 0 {
            return Err(Error::Config(format!("invalid valid-conv: d={d} r={r} stride={stride}")));
        }
        let l = (d - r) / stride + 1;
        let a = IndexFn::from_fn(l, d, |i, j| (i * stride + j) as i64);
        let alpha = IndexFn::from_fn(l, d, |_, j| j as i64);
        let mut spec = Self::new(kernel, Tensor::zeros(&[l]), a, alpha)?;
        spec.layout = Some(ConvLayout::Valid { stride });
        Ok(spec)
    }

    /// Output length equals input length; the window is centred with zero padding.
    pub fn same(kernel: Tensor, d: usize) -> Result<Self> {
        let r = kernel.len();
        let pad = ((r - 1) / 2) as i64;
        let a = IndexFn::from_fn(d, d, |i, j| i as i64 + j as i64 - pad);
        let alpha = IndexFn::from_fn(d, d, |_, j| j as i64);
        let mut spec = Self::new(kernel, Tensor::zeros(&[d]), a, alpha)?;
        spec.layout = Some(ConvLayout::Same);
        Ok(spec)
    }

    pub fn in_len(&self) -> usize {
        self.a.cols
    }

    pub fn out_len(&self) -> usize {
        self.a.rows
    }

    pub fn kernel_len(&self) -> usize {
        self.kernel.len()
    }

    pub fn layout(&self) -> Option<ConvLayout> {
        self.layout
    }

    pub(crate) fn table(&self) -> &Arc<ConvTable> {
        &self.table
    }

    /// Rebuilds the same index tables around new weights.
    pub(crate) fn with_weights(&self, kernel: Tensor, bias: Tensor) -> Result<Self> {
        let mut spec = Self::new(kernel, bias, self.a.clone(), self.alpha.clone())?;
        spec.layout = self.layout;
        Ok(spec)
    }

    /// Applies the defining sum to a `d`-vector (or each row of a batch).
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let y = apply_conv(x, &self.kernel, &self.table)?;
        match y.ndim() {
            1 => y.add(&self.bias),
            _ => y.add_row(&self.bias),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Conv2dSpec {
    pub kernel: Tensor,
    pub bias: Tensor,
    a: IndexFn,
    alpha: IndexFn,
    b: IndexFn,
    beta: IndexFn,
    table: Arc<ConvTable>,
    stride: Option<usize>,
}

impl Conv2dSpec {
    /// Convolution `M_{n,m} → M_{r,s}`; `a, α` are `r × n` and `b, β` are `s × m`.
    pub fn new(kernel: Tensor, bias: Tensor, a: IndexFn, alpha: IndexFn, b: IndexFn, beta: IndexFn) -> Result<Self> {
        let (kd, kq) = kernel.dims2()?;
        let (r, n) = (a.rows, a.cols);
        let (s, m) = (b.rows, b.cols);
        if (alpha.rows, alpha.cols) != (r, n) || (beta.rows, beta.cols) != (s, m) {
            return Err(Error::shape("conv2d index functions", &[r, n, s, m], &[alpha.rows, alpha.cols, beta.rows, beta.cols]));
        }
        if bias.shape() != [r, s] {
            return Err(Error::shape("conv2d bias", &[r, s], bias.shape()));
        }
        a.check_injective_rows("a")?;
        b.check_injective_rows("b")?;
        let mut taps = Vec::with_capacity(r * s);
        for i in 0..r {
            for j in 0..s {
                let mut t = Vec::new();
                for h in 0..n {
                    for k in 0..m {
                        if let (Some(kh), Some(kk), Some(ah), Some(bk)) = (
                            alpha.in_range(i, h, kd),
                            beta.in_range(j, k, kq),
                            a.in_range(i, h, n),
                            b.in_range(j, k, m),
                        ) {
                            t.push((kh * kq + kk, ah * m + bk));
                        }
                    }
                }
                taps.push(t);
            }
        }
        let table = Arc::new(ConvTable {
            in_len: n * m,
            kernel_len: kd * kq,
            taps,
        });
        Ok(Conv2dSpec {
            kernel,
            bias,
            a,
            alpha,
            b,
            beta,
            table,
            stride: None,
        })
    }

    /// Unpadded sliding window with the given stride on an `n × m` input.
    pub fn valid(kernel: Tensor, n: usize, m: usize, stride: usize) -> Result<Self> {
        let (kd, kq) = kernel.dims2()?;
        if kd > n || kq > m || stride == 0 {
            return Err(Error::Config(format!("invalid valid-conv2d: input {n}x{m}, kernel {kd}x{kq}, stride {stride}")));
        }
        let r = (n - kd) / stride + 1;
        let s = (m - kq) / stride + 1;
        let a = IndexFn::from_fn(r, n, |i, h| (i * stride + h) as i64);
        let alpha = IndexFn::from_fn(r, n, |_, h| h as i64);
        let b = IndexFn::from_fn(s, m, |j, k| (j * stride + k) as i64);
        let beta = IndexFn::from_fn(s, m, |_, k| k as i64);
        let mut spec = Self::new(kernel, Tensor::zeros(&[r, s]), a, alpha, b, beta)?;
        spec.stride = Some(stride);
        Ok(spec)
    }

    pub fn input_dims(&self) -> (usize, usize) {
        (self.a.cols, self.b.cols)
    }

    pub fn output_dims(&self) -> (usize, usize) {
        (self.a.rows, self.b.rows)
    }

    pub fn stride(&self) -> Option<usize> {
        self.stride
    }

    pub(crate) fn table(&self) -> &Arc<ConvTable> {
        &self.table
    }

    pub(crate) fn with_weights(&self, kernel: Tensor, bias: Tensor) -> Result<Self> {
        let mut spec = Self::new(
            kernel,
            bias,
            self.a.clone(),
            self.alpha.clone(),
            self.b.clone(),
            self.beta.clone(),
        )?;
        spec.stride = self.stride;
        Ok(spec)
    }

    /// The defining double sum, evaluated directly on an `n × m` matrix.
    pub fn forward(&self, input: &Tensor) -> Result<Tensor> {
        let (n, m) = self.input_dims();
        if input.shape() != [n, m] {
            return Err(Error::shape("conv2d", &[n, m], input.shape()));
        }
        let (kd, kq) = self.kernel.dims2()?;
        let (r, s) = self.output_dims();
        let mut out = self.bias.clone();
        for i in 0..r {
            for j in 0..s {
                let mut acc = 0.0;
                for h in 0..n {
                    for k in 0..m {
                        let (Some(kh), Some(kk)) = (self.alpha.in_range(i, h, kd), self.beta.in_range(j, k, kq)) else {
                            continue;
                        };
                        let (Some(ah), Some(bk)) = (self.a.in_range(i, h, n), self.b.in_range(j, k, m)) else {
                            continue;
                        };
                        acc += self.kernel.at(kh, kk) * input.at(ah, bk);
                    }
                }
                out.set(i, j, out.at(i, j) + acc);
            }
        }
        Ok(out)
    }

    /// The one-dimensional convolution on row-major flattened inputs that
    /// computes the same map.
    pub fn to_conv1d(&self) -> Result<Conv1dSpec> {
        let (n, m) = self.input_dims();
        let (r, s) = self.output_dims();
        let (kd, kq) = self.kernel.dims2()?;
        let (big_d, big_l) = (n * m, r * s);
        // Out-of-range pairs get distinct sentinels past the end so a'(I, ·) stays injective.
        let a = IndexFn::from_fn(big_l, big_d, |out_ix, in_ix| {
            let (i, j) = (out_ix / s, out_ix % s);
            let (h, k) = (in_ix / m, in_ix % m);
            match (self.a.in_range(i, h, n), self.b.in_range(j, k, m)) {
                (Some(ah), Some(bk)) => (ah * m + bk) as i64,
                _ => (big_d + in_ix) as i64,
            }
        });
        let alpha = IndexFn::from_fn(big_l, big_d, |out_ix, in_ix| {
            let (i, j) = (out_ix / s, out_ix % s);
            let (h, k) = (in_ix / m, in_ix % m);
            match (self.alpha.in_range(i, h, kd), self.beta.in_range(j, k, kq)) {
                (Some(kh), Some(kk)) => (kh * kq + kk) as i64,
                _ => -1,
            }
        });
        Conv1dSpec::new(
            self.kernel.reshape(&[kd * kq])?,
            self.bias.reshape(&[big_l])?,
            a,
            alpha,
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PoolLayout {
    Windows { size: usize, stride: usize },
    Grid { channels: usize, n: usize, m: usize, size: usize },
}

#[derive(Clone, Debug)]
pub struct PoolSpec {
    a: IndexFn,
    in_len: usize,
    pub kind: PoolKind,
    table: Arc<PoolTable>,
    layout: Option<PoolLayout>,
}

impl PoolSpec {
    /// `P(x)_i = φ(x[a(i, 0)], …, x[a(i, w−1)])`; `a` is `l × w`.
    pub fn new(a: IndexFn, in_len: usize, kind: PoolKind) -> Result<Self> {
        if a.rows == 0 || a.cols == 0 {
            return Err(Error::Config("empty pooling window".into()));
        }
        let windows = (0..a.rows)
            .map(|i| (0..a.cols).map(|j| a.in_range(i, j, in_len)).collect())
            .collect();
        Ok(PoolSpec {
            table: Arc::new(PoolTable { in_len, windows }),
            a,
            in_len,
            kind,
            layout: None,
        })
    }

    /// Explicit windows of equal size.
    pub fn from_windows(in_len: usize, windows: &[Vec<usize>], kind: PoolKind) -> Result<Self> {
        let w = windows.first().map_or(0, Vec::len);
        if windows.iter().any(|win| win.len() != w) {
            return Err(Error::Config("pooling windows must have equal size".into()));
        }
        let a = IndexFn::from_fn(windows.len(), w, |i, j| windows[i][j] as i64);
        Self::new(a, in_len, kind)
    }

    /// Windows of `size` consecutive entries every `stride` positions.
    pub fn windows(in_len: usize, size: usize, stride: usize, kind: PoolKind) -> Result<Self> {
        if size == 0 || size > in_len || stride == 0 {
            return Err(Error::Config(format!("invalid pooling: d={in_len} size={size} stride={stride}")));
        }
        let l = (in_len - size) / stride + 1;
        let a = IndexFn::from_fn(l, size, |i, j| (i * stride + j) as i64);
        let mut spec = Self::new(a, in_len, kind)?;
        spec.layout = Some(PoolLayout::Windows { size, stride });
        Ok(spec)
    }

    /// Non-overlapping `size × size` blocks over `channels` stacked `n × m` grids.
    pub fn grid(channels: usize, n: usize, m: usize, size: usize, kind: PoolKind) -> Result<Self> {
        if size == 0 || size > n || size > m {
            return Err(Error::Config(format!("invalid grid pooling {size} on {n}x{m}")));
        }
        let (r, s) = (n / size, m / size);
        let a = IndexFn::from_fn(channels * r * s, size * size, |o, t| {
            let (c, rest) = (o / (r * s), o % (r * s));
            let (i, j) = (rest / s, rest % s);
            let (di, dj) = (t / size, t % size);
            (c * n * m + (i * size + di) * m + j * size + dj) as i64
        });
        let mut spec = Self::new(a, channels * n * m, kind)?;
        spec.layout = Some(PoolLayout::Grid { channels, n, m, size });
        Ok(spec)
    }

    pub fn in_len(&self) -> usize {
        self.in_len
    }

    pub fn out_len(&self) -> usize {
        self.a.rows
    }

    pub fn window_len(&self) -> usize {
        self.a.cols
    }

    pub fn layout(&self) -> Option<PoolLayout> {
        self.layout
    }

    pub(crate) fn table(&self) -> &Arc<PoolTable> {
        &self.table
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        apply_pool(x, &self.table, self.kind)
    }
}
