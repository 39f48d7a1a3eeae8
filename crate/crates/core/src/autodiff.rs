//! Define-by-run reverse-mode automatic differentiation.
//!
//! A [`Tape`] records every operation applied to [`Var`]s in evaluation
//! order, so parents always precede children. [`Tape::backward`] walks the
//! record in reverse and accumulates `∂root/∂leaf` into each differentiable
//! leaf. Gradients accumulate across calls until [`Tape::zero_grads`].
//!
//! A tape is single-threaded (`Var` borrows it); build a fresh one per
//! forward pass.

use std::cell::RefCell;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::sparse::Csr;
use crate::tensor::Tensor;

/// Precomputed taps of a general convolution: output `i` is
/// `Σ kernel[k] · x[j]` over `taps[i]` pairs `(k, j)`. Out-of-range index
/// pairs are simply absent (zero extension).
#[derive(Clone, Debug, PartialEq)]
pub struct ConvTable {
    pub in_len: usize,
    pub kernel_len: usize,
    pub taps: Vec<Vec<(usize, usize)>>,
}

impl ConvTable {
    pub fn out_len(&self) -> usize {
        self.taps.len()
    }
}

/// Pooling windows; `None` entries read as zero.
#[derive(Clone, Debug, PartialEq)]
pub struct PoolTable {
    pub in_len: usize,
    pub windows: Vec<Vec<Option<usize>>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PoolKind {
    Mean,
    Max,
}

/// Sparse operator paired with its transpose for the backward pass.
#[derive(Debug)]
pub struct SparseOp {
    pub forward: Csr,
    pub transposed: Csr,
}

impl SparseOp {
    pub fn new(forward: Csr) -> Arc<Self> {
        let transposed = forward.transpose();
        Arc::new(SparseOp { forward, transposed })
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    Const,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Scale(usize, f64),
    AddScalar(usize),
    AddRow(usize, usize),
    MatMul(usize, usize),
    MatMulT(usize, usize),
    Transpose(usize),
    Reshape(usize),
    ConcatRows(Vec<usize>),
    ConcatCols(Vec<usize>),
    Slice(usize, usize),
    GatherRows(usize, Arc<[usize]>),
    Sum(usize),
    Mean(usize),
    Exp(usize),
    Log(usize),
    Sqrt(usize),
    Tanh(usize),
    Sigmoid(usize),
    Relu(usize),
    LeakyRelu(usize, f64),
    Elu(usize, f64),
    Abs(usize),
    LogCosh(usize),
    Huber(usize, f64),
    MaxAll(usize, usize),
    LogSoftmaxRows(usize),
    PickCols(usize, Arc<[usize]>),
    ScaleRows(usize, usize),
    SegmentSum(usize, Arc<[usize]>),
    SegmentSoftmax(usize, Arc<[usize]>),
    SpMM(Arc<SparseOp>, usize),
    Conv(usize, usize, Arc<ConvTable>),
    Pool(usize, Arc<PoolTable>, PoolKind),
}

#[derive(Debug)]
struct Node {
    value: Arc<Tensor>,
    op: Op,
    requires_grad: bool,
    grad: Option<Tensor>,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    id: usize,
}

impl std::fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Var#{} {:?}", self.id, self.value())
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    /// A differentiable leaf (parameter).
    pub fn var(&self, value: Tensor) -> Var<'_> {
        self.push(value, Op::Leaf, true)
    }

    /// A leaf that never receives a gradient (data, fixed operators).
    pub fn constant(&self, value: Tensor) -> Var<'_> {
        self.push(value, Op::Const, false)
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, value: Tensor, op: Op, requires_grad: bool) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value: Arc::new(value),
            op,
            requires_grad,
            grad: None,
        });
        Var {
            tape: self,
            id: nodes.len() - 1,
        }
    }

    fn value(&self, id: usize) -> Arc<Tensor> {
        self.nodes.borrow()[id].value.clone()
    }

    fn needs(&self, ids: &[usize]) -> bool {
        let nodes = self.nodes.borrow();
        ids.iter().any(|&i| nodes[i].requires_grad)
    }

    fn unary(&self, x: usize, value: Tensor, op: Op) -> Var<'_> {
        let rg = self.needs(&[x]);
        self.push(value, op, rg)
    }

    fn binary(&self, a: usize, b: usize, value: Tensor, op: Op) -> Var<'_> {
        let rg = self.needs(&[a, b]);
        self.push(value, op, rg)
    }

    /// Accumulates `∂root/∂v` into every differentiable leaf `v` reachable from `root`.
    pub fn backward(&self, root: Var<'_>) -> Result<()> {
        let mut nodes = self.nodes.borrow_mut();
        let root_value = &nodes[root.id].value;
        if !root_value.is_scalar() {
            return Err(Error::NonScalarRoot(root_value.shape().to_vec()));
        }
        let mut adj: Vec<Option<Tensor>> = vec![None; root.id + 1];
        adj[root.id] = Some(Tensor::full(root_value.shape(), 1.0));
        for id in (0..=root.id).rev() {
            let Some(g) = adj[id].take() else { continue };
            if !nodes[id].requires_grad {
                continue;
            }
            if matches!(nodes[id].op, Op::Leaf) {
                match &mut nodes[id].grad {
                    Some(acc) => acc.axpy(1.0, &g)?,
                    slot @ None => *slot = Some(g),
                }
                continue;
            }
            for (parent, pg) in local_grads(&nodes, id, &g)? {
                if !nodes[parent].requires_grad {
                    continue;
                }
                match &mut adj[parent] {
                    Some(acc) => acc.axpy(1.0, &pg)?,
                    slot @ None => *slot = Some(pg),
                }
            }
        }
        Ok(())
    }

    pub fn zero_grads(&self, vars: &[Var<'_>]) {
        let mut nodes = self.nodes.borrow_mut();
        for v in vars {
            nodes[v.id].grad = None;
        }
    }
}

/// Resets the accumulated gradient of every variable.
pub fn zero_grads(vars: &[Var<'_>]) {
    for v in vars {
        v.tape.zero_grads(std::slice::from_ref(v));
    }
}

fn local_grads(nodes: &[Node], id: usize, g: &Tensor) -> Result<Vec<(usize, Tensor)>> {
    let node = &nodes[id];
    let out = &node.value;
    let val = |i: usize| -> &Tensor { &nodes[i].value };
    let like = |i: usize, t: Tensor| -> Result<Tensor> { t.reshape(nodes[i].value.shape()) };
    Ok(match &node.op {
        Op::Leaf | Op::Const => Vec::new(),
        Op::Add(a, b) => vec![(*a, g.clone()), (*b, g.clone())],
        Op::Sub(a, b) => vec![(*a, g.clone()), (*b, g.scale(-1.0))],
        Op::Mul(a, b) => vec![(*a, g.mul(val(*b))?), (*b, g.mul(val(*a))?)],
        Op::Scale(x, s) => vec![(*x, g.scale(*s))],
        Op::AddScalar(x) => vec![(*x, g.clone())],
        Op::AddRow(x, b) => vec![(*x, g.clone()), (*b, like(*b, g.sum_rows()?)?)],
        Op::MatMul(a, b) => vec![(*a, g.matmul_t(val(*b))?), (*b, val(*a).t_matmul(g)?)],
        // out = a·bᵀ
        Op::MatMulT(a, b) => vec![(*a, g.matmul(val(*b))?), (*b, g.t_matmul(val(*a))?)],
        Op::Transpose(x) => vec![(*x, g.transpose()?)],
        Op::Reshape(x) => vec![(*x, like(*x, g.clone())?)],
        Op::ConcatRows(parts) => {
            let c = g.cols();
            let mut offset = 0;
            let mut res = Vec::with_capacity(parts.len());
            for &p in parts {
                let r = val(p).rows();
                let data = g.data()[offset * c..(offset + r) * c].to_vec();
                res.push((p, Tensor::new(val(p).shape().to_vec(), data)?));
                offset += r;
            }
            res
        }
        Op::ConcatCols(parts) => {
            let rows = g.rows();
            let mut offset = 0;
            let mut res = Vec::with_capacity(parts.len());
            for &p in parts {
                let pc = val(p).cols();
                let mut data = Vec::with_capacity(rows * pc);
                for i in 0..rows {
                    data.extend_from_slice(&g.row(i)[offset..offset + pc]);
                }
                res.push((p, Tensor::new(val(p).shape().to_vec(), data)?));
                offset += pc;
            }
            res
        }
        Op::Slice(x, start) => {
            let mut full = Tensor::zeros(val(*x).shape());
            full.data_mut()[*start..*start + g.len()].copy_from_slice(g.data());
            vec![(*x, full)]
        }
        Op::GatherRows(x, idx) => {
            let mut full = Tensor::zeros(val(*x).shape());
            for (k, &i) in idx.iter().enumerate() {
                for (d, s) in full.row_mut(i).iter_mut().zip(g.row(k)) {
                    *d += s;
                }
            }
            vec![(*x, full)]
        }
        Op::Sum(x) => vec![(*x, Tensor::full(val(*x).shape(), g.item()))],
        Op::Mean(x) => {
            let n = val(*x).len() as f64;
            vec![(*x, Tensor::full(val(*x).shape(), g.item() / n))]
        }
        Op::Exp(x) => vec![(*x, g.mul(out)?)],
        Op::Log(x) => vec![(*x, g.zip_map(val(*x), "log'", |g, x| g / x)?)],
        Op::Sqrt(x) => vec![(*x, g.zip_map(out, "sqrt'", |g, y| g / (2.0 * y))?)],
        Op::Tanh(x) => vec![(*x, g.zip_map(out, "tanh'", |g, y| g * (1.0 - y * y))?)],
        Op::Sigmoid(x) => vec![(*x, g.zip_map(out, "sigmoid'", |g, y| g * y * (1.0 - y))?)],
        // Subgradient 0 at the kink.
        Op::Relu(x) => vec![(*x, g.zip_map(val(*x), "relu'", |g, x| if x > 0.0 { g } else { 0.0 })?)],
        Op::LeakyRelu(x, s) => {
            let s = *s;
            vec![(*x, g.zip_map(val(*x), "leaky_relu'", |g, x| if x > 0.0 { g } else { s * g })?)]
        }
        Op::Elu(x, alpha) => {
            let alpha = *alpha;
            let dx = val(*x).zip_map(out, "elu'", |x, y| if x > 0.0 { 1.0 } else { y + alpha })?;
            vec![(*x, g.mul(&dx)?)]
        }
        Op::Abs(x) => {
            let sign = |x: f64| if x > 0.0 { 1.0 } else if x < 0.0 { -1.0 } else { 0.0 };
            vec![(*x, g.zip_map(val(*x), "abs'", |g, x| g * sign(x))?)]
        }
        Op::LogCosh(x) => vec![(*x, g.zip_map(val(*x), "logcosh'", |g, x| g * x.tanh())?)],
        Op::Huber(x, delta) => {
            let d = *delta;
            vec![(*x, g.zip_map(val(*x), "huber'", |g, x| g * x.clamp(-d, d))?)]
        }
        Op::MaxAll(x, arg) => {
            let mut full = Tensor::zeros(val(*x).shape());
            full.data_mut()[*arg] = g.item();
            vec![(*x, full)]
        }
        Op::LogSoftmaxRows(x) => {
            let c = out.cols();
            let mut dx = g.clone();
            for (i, row) in dx.data_mut().chunks_mut(c).enumerate() {
                let gsum: f64 = g.row(i).iter().sum();
                for (d, y) in row.iter_mut().zip(out.row(i)) {
                    *d -= y.exp() * gsum;
                }
            }
            vec![(*x, dx)]
        }
        Op::PickCols(x, labels) => {
            let mut full = Tensor::zeros(val(*x).shape());
            let c = full.cols();
            for (i, &l) in labels.iter().enumerate() {
                full.data_mut()[i * c + l] = g.data()[i];
            }
            vec![(*x, full)]
        }
        Op::ScaleRows(x, col) => {
            let xv = val(*x);
            let cv = val(*col);
            let c = xv.cols();
            let mut dx = g.clone();
            let mut dc = vec![0.0; cv.len()];
            for (i, dci) in dc.iter_mut().enumerate() {
                let s = cv.data()[i];
                let gi = g.row(i);
                *dci = gi.iter().zip(xv.row(i)).map(|(a, b)| a * b).sum();
                for d in &mut dx.data_mut()[i * c..(i + 1) * c] {
                    *d *= s;
                }
            }
            vec![(*x, dx), (*col, Tensor::new(cv.shape().to_vec(), dc)?)]
        }
        Op::SegmentSum(x, offsets) => {
            let xv = val(*x);
            let mut dx = Tensor::zeros(xv.shape());
            for seg in 0..offsets.len() - 1 {
                for e in offsets[seg]..offsets[seg + 1] {
                    dx.row_mut(e).copy_from_slice(g.row(seg));
                }
            }
            vec![(*x, dx)]
        }
        Op::SegmentSoftmax(x, offsets) => {
            let y = out.data();
            let gd = g.data();
            let mut dx = vec![0.0; y.len()];
            for seg in 0..offsets.len() - 1 {
                let span = offsets[seg]..offsets[seg + 1];
                let dot: f64 = span.clone().map(|e| y[e] * gd[e]).sum();
                for e in span {
                    dx[e] = y[e] * (gd[e] - dot);
                }
            }
            vec![(*x, Tensor::new(val(*x).shape().to_vec(), dx)?)]
        }
        Op::SpMM(op, x) => vec![(*x, op.transposed.matmul(g)?)],
        Op::Conv(k, x, table) => {
            let kv = val(*k);
            let xv = val(*x);
            let batch = xv.len() / table.in_len;
            let mut dk = vec![0.0; kv.len()];
            let mut dx = vec![0.0; xv.len()];
            let l = table.out_len();
            for b in 0..batch {
                let xs = &xv.data()[b * table.in_len..(b + 1) * table.in_len];
                let dxs = &mut dx[b * table.in_len..(b + 1) * table.in_len];
                for (i, taps) in table.taps.iter().enumerate() {
                    let gi = g.data()[b * l + i];
                    for &(ki, xi) in taps {
                        dk[ki] += gi * xs[xi];
                        dxs[xi] += gi * kv.data()[ki];
                    }
                }
            }
            vec![
                (*k, Tensor::new(kv.shape().to_vec(), dk)?),
                (*x, Tensor::new(xv.shape().to_vec(), dx)?),
            ]
        }
        Op::Pool(x, table, kind) => {
            let xv = val(*x);
            let batch = xv.len() / table.in_len;
            let l = table.windows.len();
            let mut dx = vec![0.0; xv.len()];
            for b in 0..batch {
                let xs = &xv.data()[b * table.in_len..(b + 1) * table.in_len];
                let dxs = &mut dx[b * table.in_len..(b + 1) * table.in_len];
                for (i, win) in table.windows.iter().enumerate() {
                    let gi = g.data()[b * l + i];
                    match kind {
                        PoolKind::Mean => {
                            let w = win.len() as f64;
                            for j in win.iter().flatten() {
                                dxs[*j] += gi / w;
                            }
                        }
                        PoolKind::Max => {
                            if let Some(j) = pool_argmax(xs, win) {
                                dxs[j] += gi;
                            }
                        }
                    }
                }
            }
            vec![(*x, Tensor::new(xv.shape().to_vec(), dx)?)]
        }
    })
}

/// Index of the first maximal entry of a window, `None` if a zero-extended
/// slot wins.
fn pool_argmax(xs: &[f64], win: &[Option<usize>]) -> Option<usize> {
    let mut best: Option<(f64, Option<usize>)> = None;
    for slot in win {
        let v = slot.map_or(0.0, |j| xs[j]);
        if best.is_none_or(|(b, _)| v > b) {
            best = Some((v, *slot));
        }
    }
    best.and_then(|(_, j)| j)
}

fn pool_eval(xs: &[f64], win: &[Option<usize>], kind: PoolKind) -> f64 {
    let vals = win.iter().map(|s| s.map_or(0.0, |j| xs[j]));
    match kind {
        PoolKind::Mean => vals.sum::<f64>() / win.len() as f64,
        PoolKind::Max => vals.fold(f64::NEG_INFINITY, f64::max),
    }
}

fn check_same(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::shape(op, a.shape(), b.shape()));
    }
    Ok(())
}

#[allow(clippy::should_implement_trait)]
impl<'t> Var<'t> {
    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    pub fn value(&self) -> Arc<Tensor> {
        self.tape.value(self.id)
    }

    pub fn shape(&self) -> Vec<usize> {
        self.value().shape().to_vec()
    }

    /// Accumulated gradient; all zeros until a backward pass reaches this variable.
    pub fn grad(&self) -> Tensor {
        let nodes = self.tape.nodes.borrow();
        let node = &nodes[self.id];
        node.grad.clone().unwrap_or_else(|| Tensor::zeros(node.value.shape()))
    }

    pub fn backward(&self) -> Result<()> {
        self.tape.backward(*self)
    }

    fn same_tape(&self, other: &Var<'t>) {
        assert!(std::ptr::eq(self.tape, other.tape), "variables from different tapes");
    }

    fn map(self, f: impl Fn(f64) -> f64, op: Op) -> Var<'t> {
        let v = self.value().map(f);
        self.tape.unary(self.id, v, op)
    }

    pub fn add(self, other: Var<'t>) -> Result<Var<'t>> {
        self.same_tape(&other);
        let v = self.value().add(&other.value())?;
        Ok(self.tape.binary(self.id, other.id, v, Op::Add(self.id, other.id)))
    }

    pub fn sub(self, other: Var<'t>) -> Result<Var<'t>> {
        self.same_tape(&other);
        let v = self.value().sub(&other.value())?;
        Ok(self.tape.binary(self.id, other.id, v, Op::Sub(self.id, other.id)))
    }

    /// Elementwise product.
    pub fn mul(self, other: Var<'t>) -> Result<Var<'t>> {
        self.same_tape(&other);
        let v = self.value().mul(&other.value())?;
        Ok(self.tape.binary(self.id, other.id, v, Op::Mul(self.id, other.id)))
    }

    pub fn scale(self, s: f64) -> Var<'t> {
        self.map(|x| x * s, Op::Scale(self.id, s))
    }

    pub fn neg(self) -> Var<'t> {
        self.scale(-1.0)
    }

    pub fn add_scalar(self, c: f64) -> Var<'t> {
        self.map(|x| x + c, Op::AddScalar(self.id))
    }

    /// Adds the bias vector `b` to every row of a matrix.
    pub fn add_row(self, b: Var<'t>) -> Result<Var<'t>> {
        self.same_tape(&b);
        let v = self.value().add_row(&b.value())?;
        Ok(self.tape.binary(self.id, b.id, v, Op::AddRow(self.id, b.id)))
    }

    pub fn matmul(self, other: Var<'t>) -> Result<Var<'t>> {
        self.same_tape(&other);
        let v = self.value().matmul(&other.value())?;
        Ok(self.tape.binary(self.id, other.id, v, Op::MatMul(self.id, other.id)))
    }

    /// `self · otherᵀ`.
    pub fn matmul_t(self, other: Var<'t>) -> Result<Var<'t>> {
        self.same_tape(&other);
        let v = self.value().matmul_t(&other.value())?;
        Ok(self.tape.binary(self.id, other.id, v, Op::MatMulT(self.id, other.id)))
    }

    pub fn transpose(self) -> Result<Var<'t>> {
        let v = self.value().transpose()?;
        Ok(self.tape.unary(self.id, v, Op::Transpose(self.id)))
    }

    pub fn reshape(self, shape: &[usize]) -> Result<Var<'t>> {
        let v = self.value().reshape(shape)?;
        Ok(self.tape.unary(self.id, v, Op::Reshape(self.id)))
    }

    pub fn concat_rows(parts: &[Var<'t>]) -> Result<Var<'t>> {
        let tape = parts.first().ok_or(Error::InvalidShape(vec![]))?.tape;
        let values: Vec<Arc<Tensor>> = parts.iter().map(|p| p.value()).collect();
        let refs: Vec<&Tensor> = values.iter().map(|v| v.as_ref()).collect();
        let v = Tensor::concat_rows(&refs)?;
        let ids: Vec<usize> = parts.iter().map(|p| p.id).collect();
        let rg = tape.needs(&ids);
        Ok(tape.push(v, Op::ConcatRows(ids), rg))
    }

    pub fn concat_cols(parts: &[Var<'t>]) -> Result<Var<'t>> {
        let tape = parts.first().ok_or(Error::InvalidShape(vec![]))?.tape;
        let values: Vec<Arc<Tensor>> = parts.iter().map(|p| p.value()).collect();
        let refs: Vec<&Tensor> = values.iter().map(|v| v.as_ref()).collect();
        let v = Tensor::concat_cols(&refs)?;
        let ids: Vec<usize> = parts.iter().map(|p| p.id).collect();
        let rg = tape.needs(&ids);
        Ok(tape.push(v, Op::ConcatCols(ids), rg))
    }

    /// Contiguous flat range `start..start + prod(shape)`, viewed with `shape`.
    pub fn slice(self, start: usize, shape: &[usize]) -> Result<Var<'t>> {
        let src = self.value();
        let n: usize = shape.iter().product();
        if start + n > src.len() {
            return Err(Error::shape("slice", src.shape(), shape));
        }
        let v = Tensor::new(shape.to_vec(), src.data()[start..start + n].to_vec())?;
        Ok(self.tape.unary(self.id, v, Op::Slice(self.id, start)))
    }

    pub fn gather_rows(self, idx: &[usize]) -> Result<Var<'t>> {
        let v = self.value().gather_rows(idx)?;
        Ok(self.tape.unary(self.id, v, Op::GatherRows(self.id, idx.into())))
    }

    pub fn sum(self) -> Var<'t> {
        let v = Tensor::scalar(self.value().sum());
        self.tape.unary(self.id, v, Op::Sum(self.id))
    }

    pub fn mean(self) -> Var<'t> {
        let v = Tensor::scalar(self.value().mean());
        self.tape.unary(self.id, v, Op::Mean(self.id))
    }

    pub fn exp(self) -> Var<'t> {
        self.map(f64::exp, Op::Exp(self.id))
    }

    pub fn log(self) -> Result<Var<'t>> {
        let v = self.value().log()?;
        Ok(self.tape.unary(self.id, v, Op::Log(self.id)))
    }

    pub fn sqrt(self) -> Result<Var<'t>> {
        let val = self.value();
        if let Some(x) = val.data().iter().find(|&&x| !(x > 0.0)) {
            return Err(Error::DomainError {
                op: "sqrt",
                msg: format!("non-positive entry {x}"),
            });
        }
        let v = val.map(f64::sqrt);
        Ok(self.tape.unary(self.id, v, Op::Sqrt(self.id)))
    }

    pub fn tanh(self) -> Var<'t> {
        self.map(f64::tanh, Op::Tanh(self.id))
    }

    pub fn sigmoid(self) -> Var<'t> {
        self.map(|x| 1.0 / (1.0 + (-x).exp()), Op::Sigmoid(self.id))
    }

    pub fn relu(self) -> Var<'t> {
        self.map(|x| x.max(0.0), Op::Relu(self.id))
    }

    pub fn leaky_relu(self, slope: f64) -> Var<'t> {
        self.map(move |x| if x > 0.0 { x } else { slope * x }, Op::LeakyRelu(self.id, slope))
    }

    pub fn elu(self, alpha: f64) -> Var<'t> {
        self.map(move |x| if x > 0.0 { x } else { alpha * x.exp_m1() }, Op::Elu(self.id, alpha))
    }

    pub fn abs(self) -> Var<'t> {
        self.map(f64::abs, Op::Abs(self.id))
    }

    /// `log(cosh(x))`, evaluated without overflow.
    pub fn log_cosh(self) -> Var<'t> {
        self.map(
            |x| {
                let a = x.abs();
                a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2
            },
            Op::LogCosh(self.id),
        )
    }

    /// Elementwise Huber function with threshold `delta`.
    pub fn huber(self, delta: f64) -> Var<'t> {
        self.map(
            move |r| {
                if r.abs() <= delta {
                    0.5 * r * r
                } else {
                    delta * (r.abs() - 0.5 * delta)
                }
            },
            Op::Huber(self.id, delta),
        )
    }

    /// Maximum over all entries (first maximal index gets the gradient).
    pub fn max_all(self) -> Var<'t> {
        let (m, arg) = self.value().max();
        self.tape.unary(self.id, Tensor::scalar(m), Op::MaxAll(self.id, arg))
    }

    /// Row-wise `x − logsumexp(x)`, shifted by the row max for stability.
    pub fn log_softmax_rows(self) -> Result<Var<'t>> {
        let x = self.value();
        let (_, c) = x.dims2()?;
        let mut out = x.as_ref().clone();
        for row in out.data_mut().chunks_mut(c) {
            let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
            for v in row.iter_mut() {
                *v -= lse;
            }
        }
        Ok(self.tape.unary(self.id, out, Op::LogSoftmaxRows(self.id)))
    }

    /// Vector of `x[i, labels[i]]`.
    pub fn pick_cols(self, labels: &[usize]) -> Result<Var<'t>> {
        let x = self.value();
        let (r, c) = x.dims2()?;
        if labels.len() != r {
            return Err(Error::shape("pick_cols", x.shape(), &[labels.len()]));
        }
        let mut out = Vec::with_capacity(r);
        for (i, &l) in labels.iter().enumerate() {
            if l >= c {
                return Err(Error::LabelOutOfRange { label: l, classes: c });
            }
            out.push(x.at(i, l));
        }
        Ok(self.tape.unary(self.id, Tensor::vector(out), Op::PickCols(self.id, labels.into())))
    }

    /// Multiplies row `i` of a matrix by `col[i]`.
    pub fn scale_rows(self, col: Var<'t>) -> Result<Var<'t>> {
        self.same_tape(&col);
        let x = self.value();
        let c = col.value();
        let (r, w) = x.dims2()?;
        if c.len() != r {
            return Err(Error::shape("scale_rows", x.shape(), c.shape()));
        }
        let mut out = x.as_ref().clone();
        for (i, row) in out.data_mut().chunks_mut(w).enumerate() {
            for v in row {
                *v *= c.data()[i];
            }
        }
        Ok(self.tape.binary(self.id, col.id, out, Op::ScaleRows(self.id, col.id)))
    }

    /// Sums consecutive row segments `offsets[s]..offsets[s+1]` into row `s`.
    pub fn segment_sum(self, offsets: &Arc<[usize]>) -> Result<Var<'t>> {
        let x = self.value();
        let (r, c) = x.dims2()?;
        if offsets.last() != Some(&r) || offsets.len() < 2 {
            return Err(Error::shape("segment_sum", x.shape(), &[offsets.len()]));
        }
        let mut out = Tensor::zeros(&[offsets.len() - 1, c]);
        for s in 0..offsets.len() - 1 {
            let dst = out.row_mut(s);
            for e in offsets[s]..offsets[s + 1] {
                for (d, v) in dst.iter_mut().zip(x.row(e)) {
                    *d += v;
                }
            }
        }
        Ok(self.tape.unary(self.id, out, Op::SegmentSum(self.id, offsets.clone())))
    }

    /// Softmax within each segment of a flat vector of logits.
    pub fn segment_softmax(self, offsets: &Arc<[usize]>) -> Result<Var<'t>> {
        let x = self.value();
        if offsets.last() != Some(&x.len()) {
            return Err(Error::shape("segment_softmax", x.shape(), &[offsets.len()]));
        }
        let mut out = x.as_ref().clone();
        let d = out.data_mut();
        for s in 0..offsets.len() - 1 {
            let span = offsets[s]..offsets[s + 1];
            if span.is_empty() {
                continue;
            }
            let m = d[span.clone()].iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for v in &mut d[span.clone()] {
                *v = (*v - m).exp();
                z += *v;
            }
            for v in &mut d[span] {
                *v /= z;
            }
        }
        Ok(self.tape.unary(self.id, out, Op::SegmentSoftmax(self.id, offsets.clone())))
    }

    /// Fixed sparse operator applied on the left: `S · self`.
    pub fn spmm(self, op: &Arc<SparseOp>) -> Result<Var<'t>> {
        let v = op.forward.matmul(&self.value())?;
        Ok(self.tape.unary(self.id, v, Op::SpMM(op.clone(), self.id)))
    }

    /// General convolution of each row of `self` (or of a single vector)
    /// with `kernel`, following `table`.
    pub fn conv(self, kernel: Var<'t>, table: &Arc<ConvTable>) -> Result<Var<'t>> {
        self.same_tape(&kernel);
        let x = self.value();
        let k = kernel.value();
        if k.len() != table.kernel_len {
            return Err(Error::shape("conv kernel", k.shape(), &[table.kernel_len]));
        }
        let out = apply_conv(&x, &k, table)?;
        Ok(self
            .tape
            .binary(kernel.id, self.id, out, Op::Conv(kernel.id, self.id, table.clone())))
    }

    pub fn pool(self, table: &Arc<PoolTable>, kind: PoolKind) -> Result<Var<'t>> {
        let out = apply_pool(&self.value(), table, kind)?;
        Ok(self.tape.unary(self.id, out, Op::Pool(self.id, table.clone(), kind)))
    }
}

fn batch_shape(x: &Tensor, in_len: usize, out_len: usize, op: &'static str) -> Result<(usize, Vec<usize>)> {
    match x.shape() {
        [d] if *d == in_len => Ok((1, vec![out_len])),
        [b, d] if *d == in_len => Ok((*b, vec![*b, out_len])),
        s => Err(Error::shape(op, s, &[in_len])),
    }
}

/// Evaluates a convolution table on a vector or on each row of a matrix.
pub fn apply_conv(x: &Tensor, kernel: &Tensor, table: &ConvTable) -> Result<Tensor> {
    let (batch, shape) = batch_shape(x, table.in_len, table.out_len(), "conv")?;
    let mut out = Vec::with_capacity(batch * table.out_len());
    for b in 0..batch {
        let xs = &x.data()[b * table.in_len..(b + 1) * table.in_len];
        for taps in &table.taps {
            out.push(taps.iter().map(|&(k, j)| kernel.data()[k] * xs[j]).sum());
        }
    }
    Tensor::new(shape, out)
}

pub fn apply_pool(x: &Tensor, table: &PoolTable, kind: PoolKind) -> Result<Tensor> {
    let (batch, shape) = batch_shape(x, table.in_len, table.windows.len(), "pool")?;
    let mut out = Vec::with_capacity(batch * table.windows.len());
    for b in 0..batch {
        let xs = &x.data()[b * table.in_len..(b + 1) * table.in_len];
        for win in &table.windows {
            out.push(pool_eval(xs, win, kind));
        }
    }
    Tensor::new(shape, out)
}

impl<'t> Var<'t> {
    /// Checks that two variables have the same shape.
    pub fn same_shape(&self, other: &Var<'t>, op: &'static str) -> Result<()> {
        check_same(op, &self.value(), &other.value())
    }
}
