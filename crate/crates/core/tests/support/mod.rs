//! Shared fixtures: a seeded catalogue of differentiable primitives with a
//! central-difference gradient check, and random graph generators.

#![allow(dead_code)]

use std::cell::RefCell;
use std::sync::Arc;

use gdl::autodiff::{ConvTable, PoolKind, PoolTable, SparseOp};
use gdl::gnn::{EncoderDecoder, EncoderLayer, GatLayer, GraphOps, MessagePassingLayer, MpVariant};
use gdl::graph::Graph;
use gdl::losses::{cross_entropy_var, regression_loss_var, RegressionLoss};
use gdl::nn::{Activation, Conv1dLayer, Conv1dSpec, Conv2dLayer, Conv2dSpec, Layer, Model, ModelLayer, Parameterized, PoolSpec};
use gdl::sparse::Csr;
use gdl::{Result, Tape, Tensor, Var};
use rand::seq::SliceRandom;
use rand::distr::uniform::{SampleRange, SampleUniform};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FD_STEP: f64 = 1e-6;
pub const GRAD_TOL: f64 = 1e-5;
/// Denominator floor of the relative error.
pub const GRAD_FLOOR: f64 = 1e-2;

pub type Build = Box<dyn for<'t> Fn(&[Var<'t>]) -> Result<Var<'t>>>;

/// Inputs (all differentiated) and the map from their variables to an output.
pub struct Case {
    pub inputs: Vec<Tensor>,
    pub f: Build,
}

pub struct Primitive {
    pub name: &'static str,
    pub make: fn(&Gen) -> Result<Case>,
}

/// A seeded generator that helpers can share while building one case.
pub struct Gen(RefCell<ChaCha8Rng>);

impl Gen {
    pub fn new(seed: u64) -> Self {
        Gen(RefCell::new(ChaCha8Rng::seed_from_u64(seed)))
    }

    pub fn range<T: SampleUniform, R: SampleRange<T>>(&self, r: R) -> T {
        self.0.borrow_mut().random_range(r)
    }

    pub fn coin(&self) -> bool {
        self.0.borrow_mut().random()
    }

    pub fn unit(&self) -> f64 {
        self.0.borrow_mut().random()
    }

    /// A small tensor dimension.
    pub fn dim(&self) -> usize {
        self.range(1..=4)
    }

    pub fn with<T>(&self, f: impl FnOnce(&mut ChaCha8Rng) -> T) -> T {
        f(&mut self.0.borrow_mut())
    }
}

fn case<F>(inputs: Vec<Tensor>, f: F) -> Result<Case>
where
    F: for<'t> Fn(&[Var<'t>]) -> Result<Var<'t>> + 'static,
{
    Ok(Case { inputs, f: Box::new(f) })
}

pub fn uniform(rng: &Gen, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.range(lo..hi)).collect()).unwrap()
}

pub fn normal(rng: &Gen, shape: &[usize]) -> Tensor {
    uniform(rng, shape, -1.5, 1.5)
}

fn seeded_signs(rng: &Gen, t: Tensor) -> Tensor {
    let signs: Vec<f64> = (0..t.len()).map(|_| if rng.coin() { 1.0 } else { -1.0 }).collect();
    let data = t.data().iter().zip(&signs).map(|(v, s)| v * s).collect();
    Tensor::new(t.shape().to_vec(), data).unwrap()
}

/// Entries with `0.1 ≤ |x| ≤ 2`, away from the kinks at zero.
pub fn kinkless(rng: &Gen, shape: &[usize]) -> Tensor {
    let t = uniform(rng, shape, 0.1, 2.0);
    seeded_signs(rng, t)
}

/// Fixed projection weights so that `Σ out ⊙ R` exercises every output entry
/// with a different coefficient.
fn projection(shape: &[usize]) -> Tensor {
    let n: usize = shape.iter().product();
    let data = (0..n).map(|i| 0.5 + ((i * 7919) % 13) as f64 / 13.0).collect();
    Tensor::new(shape.to_vec(), data).unwrap()
}

fn scalarize<'t>(out: Var<'t>) -> Result<Var<'t>> {
    let r = out.tape().constant(projection(&out.shape()));
    Ok(out.mul(r)?.sum())
}

fn value(case: &Case, inputs: &[Tensor]) -> Result<f64> {
    let tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.constant(t.clone())).collect();
    Ok(scalarize((case.f)(&vars)?)?.value().item())
}

/// Largest relative error `|a − n| / max(|a|, |n|, floor)` between the tape
/// gradient and central differences, over every entry of every input.
pub fn max_grad_error(case: &Case) -> Result<f64> {
    let tape = Tape::new();
    let vars: Vec<Var> = case.inputs.iter().map(|t| tape.var(t.clone())).collect();
    let root = scalarize((case.f)(&vars)?)?;
    tape.backward(root)?;
    let mut worst = 0.0f64;
    let mut inputs = case.inputs.clone();
    for (k, v) in vars.iter().enumerate() {
        let analytic = v.grad();
        for i in 0..inputs[k].len() {
            let x0 = inputs[k].data()[i];
            inputs[k].data_mut()[i] = x0 + FD_STEP;
            let up = value(case, &inputs)?;
            inputs[k].data_mut()[i] = x0 - FD_STEP;
            let down = value(case, &inputs)?;
            inputs[k].data_mut()[i] = x0;
            let numeric = (up - down) / (2.0 * FD_STEP);
            let a = analytic.data()[i];
            let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(GRAD_FLOOR);
            worst = worst.max(err);
        }
    }
    Ok(worst)
}

/// A connected graph on `n` nodes: a random spanning path plus extra edges.
pub fn connected_graph(rng: &Gen, n: usize, p: f64) -> Graph {
    let mut order: Vec<usize> = (0..n).collect();
    rng.with(|r| order.shuffle(r));
    let mut edges: Vec<(usize, usize)> = order.windows(2).map(|w| (w[0].min(w[1]), w[0].max(w[1]))).collect();
    for i in 0..n {
        for j in i + 1..n {
            if !edges.contains(&(i, j)) && rng.unit() < p {
                edges.push((i, j));
            }
        }
    }
    Graph::new(n, &edges).unwrap()
}

/// An arbitrary graph with up to `max_n` nodes, possibly disconnected.
pub fn random_graph(rng: &Gen, max_n: usize) -> Graph {
    let n = rng.range(1..=max_n);
    let p = rng.range(0.0..1.0);
    rng.with(|r| Graph::random(n, p, r))
}

fn random_offsets(rng: &Gen, segments: usize) -> Arc<[usize]> {
    let mut offsets = vec![0];
    for _ in 0..segments {
        offsets.push(offsets.last().unwrap() + rng.range(1..=4));
    }
    offsets.into()
}

fn random_weights<M: Parameterized>(rng: &Gen, m: &M, scale: f64) -> Tensor {
    uniform(rng, &[m.n_params()], -scale, scale)
}

fn pick_activation(rng: &Gen) -> Activation {
    // Continuously differentiable activations only; ReLU kinks would land anywhere.
    [Activation::Tanh, Activation::Identity, Activation::Elu][rng.range(0..3)]
}

fn model_case(model: Model, rng: &Gen, batch: usize) -> Result<Case> {
    let w = random_weights(rng, &model, 0.8);
    let x = normal(rng, &[batch, model.in_len()]);
    case(vec![w, x], move |v| model.forward_var(&model.unflatten(v[0])?, v[1]))
}

fn graph_case(model: EncoderDecoder, rng: &Gen, g: Graph) -> Result<Case> {
    let w = random_weights(rng, &model, 0.8);
    let h0 = normal(rng, &[g.n_nodes(), model.in_dim()]);
    let ops = GraphOps::new(&g);
    case(vec![w, h0], move |v| model.forward_var(&model.unflatten(v[0])?, &ops, v[1]))
}

fn mp_case(variant: MpVariant, rng: &Gen) -> Result<Case> {
    let n = rng.range(2..=7);
    let g = connected_graph(rng, n, 0.3);
    let (d, h) = (rng.dim(), rng.dim());
    let layer = MessagePassingLayer::zeros(variant, d, h, Activation::Tanh);
    let decoder = Model::mlp(&[h, 2], Activation::Identity)?;
    graph_case(EncoderDecoder::new(vec![EncoderLayer::Mp(layer)], Some(decoder))?, rng, g)
}

fn gat_case(rng: &Gen, self_loops: bool) -> Result<Case> {
    let n = rng.range(2..=7);
    let g = connected_graph(rng, n, 0.3);
    let (d, h, k) = (rng.dim(), rng.dim(), rng.range(1..=3));
    let model = EncoderDecoder::new(
        vec![
            EncoderLayer::Gat(GatLayer::zeros(d, h, k, Activation::Elu, self_loops)),
            EncoderLayer::Gat(GatLayer::zeros(h * k, 2, 1, Activation::Identity, self_loops)),
        ],
        None,
    )?;
    graph_case(model, rng, g)
}

fn regression_case(kind: RegressionLoss, rng: &Gen) -> Result<Case> {
    let shape = [rng.dim(), rng.dim()];
    let target = normal(rng, &shape);
    // Residuals stay away from zero (|r| kinks) and from ±1 (the Huber knot).
    let r = uniform(rng, &shape, 0.1, 0.8);
    let pred = target.add(&seeded_signs(rng, r))?;
    case(vec![pred, target], move |v| regression_loss_var(kind, v[0], v[1]))
}

macro_rules! prim {
    ($name:expr, $f:expr) => {
        Primitive { name: $name, make: $f }
    };
}

/// Every differentiable operation, layer, model and loss, each with a
/// generator of random instances.
pub fn catalogue() -> Vec<Primitive> {
    vec![
        prim!("add", |r| {
            let s = [r.dim(), r.dim()];
            case(vec![normal(r, &s), normal(r, &s)], |v| v[0].add(v[1]))
        }),
        prim!("sub", |r| {
            let s = [r.dim(), r.dim()];
            case(vec![normal(r, &s), normal(r, &s)], |v| v[0].sub(v[1]))
        }),
        prim!("mul", |r| {
            let s = [r.dim(), r.dim()];
            case(vec![normal(r, &s), normal(r, &s)], |v| v[0].mul(v[1]))
        }),
        prim!("scale", |r| {
            let s: f64 = r.range(-2.0..2.0);
            case(vec![normal(r, &[r.dim(), r.dim()])], move |v| Ok(v[0].scale(s)))
        }),
        prim!("neg", |r| case(vec![normal(r, &[r.dim()])], |v| Ok(v[0].neg()))),
        prim!("add_scalar", |r| {
            let c: f64 = r.range(-2.0..2.0);
            case(vec![normal(r, &[r.dim(), r.dim()])], move |v| Ok(v[0].add_scalar(c)))
        }),
        prim!("add_row", |r| {
            let (n, c) = (r.dim(), r.dim());
            case(vec![normal(r, &[n, c]), normal(r, &[c])], |v| v[0].add_row(v[1]))
        }),
        prim!("matmul", |r| {
            let (a, k, b) = (r.dim(), r.dim(), r.dim());
            case(vec![normal(r, &[a, k]), normal(r, &[k, b])], |v| v[0].matmul(v[1]))
        }),
        prim!("matmul_t", |r| {
            let (a, k, b) = (r.dim(), r.dim(), r.dim());
            case(vec![normal(r, &[a, k]), normal(r, &[b, k])], |v| v[0].matmul_t(v[1]))
        }),
        prim!("transpose", |r| case(vec![normal(r, &[r.dim(), r.dim()])], |v| v[0].transpose())),
        prim!("reshape", |r| {
            let (a, b) = (r.dim(), r.dim());
            case(vec![normal(r, &[a, b])], move |v| v[0].reshape(&[b, a])?.tanh().reshape(&[a * b]))
        }),
        prim!("concat_rows", |r| {
            let c = r.dim();
            case(vec![normal(r, &[r.dim(), c]), normal(r, &[r.dim(), c])], |v| Var::concat_rows(&[v[0], v[1], v[0]]))
        }),
        prim!("concat_cols", |r| {
            let n = r.dim();
            case(vec![normal(r, &[n, r.dim()]), normal(r, &[n, r.dim()])], |v| Var::concat_cols(&[v[1], v[0]]))
        }),
        prim!("slice", |r| {
            let len = r.range(2..=16);
            let start = r.range(0..len);
            let rows = r.range(1..=len - start);
            let cols = (len - start) / rows;
            case(vec![normal(r, &[len])], move |v| v[0].slice(start, &[rows, cols]))
        }),
        prim!("gather_rows", |r| {
            let (n, c) = (r.dim(), r.dim());
            let idx: Vec<usize> = (0..r.range(1..=6)).map(|_| r.range(0..n)).collect();
            case(vec![normal(r, &[n, c])], move |v| v[0].gather_rows(&idx))
        }),
        prim!("sum", |r| case(vec![normal(r, &[r.dim(), r.dim()])], |v| Ok(v[0].sum()))),
        prim!("mean", |r| case(vec![normal(r, &[r.dim(), r.dim()])], |v| Ok(v[0].mean()))),
        prim!("exp", |r| case(vec![normal(r, &[r.dim(), r.dim()])], |v| Ok(v[0].exp()))),
        prim!("log", |r| case(vec![uniform(r, &[r.dim(), r.dim()], 0.3, 3.0)], |v| v[0].log())),
        prim!("sqrt", |r| case(vec![uniform(r, &[r.dim(), r.dim()], 0.3, 3.0)], |v| v[0].sqrt())),
        prim!("tanh", |r| case(vec![normal(r, &[r.dim(), r.dim()])], |v| Ok(v[0].tanh()))),
        prim!("sigmoid", |r| case(vec![normal(r, &[r.dim(), r.dim()])], |v| Ok(v[0].sigmoid()))),
        prim!("relu", |r| case(vec![kinkless(r, &[r.dim(), r.dim()])], |v| Ok(v[0].relu()))),
        prim!("leaky_relu", |r| {
            let slope = r.range(0.01..0.9);
            case(vec![kinkless(r, &[r.dim(), r.dim()])], move |v| Ok(v[0].leaky_relu(slope)))
        }),
        prim!("elu", |r| {
            let alpha = r.range(0.5..1.5);
            case(vec![kinkless(r, &[r.dim(), r.dim()])], move |v| Ok(v[0].elu(alpha)))
        }),
        prim!("abs", |r| case(vec![kinkless(r, &[r.dim(), r.dim()])], |v| Ok(v[0].abs()))),
        prim!("log_cosh", |r| case(vec![normal(r, &[r.dim(), r.dim()])], |v| Ok(v[0].log_cosh()))),
        prim!("huber", |r| {
            // Entries on both sides of the knot at |x| = 1, none close to it.
            let x = kinkless(r, &[r.dim(), r.dim()]).map(|v| if (v.abs() - 1.0).abs() < 0.05 { v * 1.1 } else { v });
            case(vec![x], |v| Ok(v[0].huber(1.0)))
        }),
        prim!("max_all", |r| case(vec![normal(r, &[r.dim(), r.dim()])], |v| Ok(v[0].max_all()))),
        prim!("log_softmax_rows", |r| {
            case(vec![normal(r, &[r.dim(), r.dim()])], |v| v[0].log_softmax_rows())
        }),
        prim!("pick_cols", |r| {
            let (n, c) = (r.dim(), r.dim());
            let labels: Vec<usize> = (0..n).map(|_| r.range(0..c)).collect();
            case(vec![normal(r, &[n, c])], move |v| v[0].pick_cols(&labels))
        }),
        prim!("scale_rows", |r| {
            let n = r.dim();
            case(vec![normal(r, &[n, r.dim()]), normal(r, &[n])], |v| v[0].scale_rows(v[1]))
        }),
        prim!("segment_sum", |r| {
            let offsets = random_offsets(r, r.dim());
            let rows = *offsets.last().unwrap();
            case(vec![normal(r, &[rows, r.dim()])], move |v| v[0].segment_sum(&offsets))
        }),
        prim!("segment_softmax", |r| {
            let offsets = random_offsets(r, r.dim());
            let len = *offsets.last().unwrap();
            case(vec![normal(r, &[len])], move |v| v[0].segment_softmax(&offsets))
        }),
        prim!("spmm", |r| {
            let (m, n, c) = (r.dim(), r.dim(), r.dim());
            let trip: Vec<(usize, usize, f64)> = (0..r.range(0..=m * n))
                .map(|_| (r.range(0..m), r.range(0..n), r.range(-1.0..1.0)))
                .collect();
            let op = SparseOp::new(Csr::from_triplets(m, n, &trip)?);
            case(vec![normal(r, &[n, c])], move |v| v[0].spmm(&op))
        }),
        prim!("conv", |r| {
            let (in_len, kernel_len, out_len) = (r.range(1..=8), r.dim(), r.dim());
            let taps = (0..out_len)
                .map(|_| {
                    (0..r.range(0..=4))
                        .map(|_| (r.range(0..kernel_len), r.range(0..in_len)))
                        .collect()
                })
                .collect();
            let table = Arc::new(ConvTable { in_len, kernel_len, taps });
            case(vec![normal(r, &[r.dim(), in_len]), normal(r, &[kernel_len])], move |v| v[0].conv(v[1], &table))
        }),
        prim!("pool_mean", |r| pool_case(r, PoolKind::Mean)),
        prim!("pool_max", |r| pool_case(r, PoolKind::Max)),
        prim!("affine_layer", |r| model_case(Model::mlp(&[r.dim(), r.dim()], Activation::Identity)?, r, r.dim())),
        prim!("mlp", |r| {
            let act = pick_activation(r);
            model_case(Model::mlp(&[r.dim(), r.dim(), r.dim(), r.dim()], act)?, r, r.dim())
        }),
        prim!("conv1d_layer", |r| {
            let d = r.range(3..=9);
            let channels = (0..r.dim())
                .map(|_| Conv1dSpec::valid(normal(r, &[r.range(1..=3)]), d, r.range(1..=2)))
                .collect::<Result<Vec<_>>>()?;
            let conv = Layer::Conv1d(Conv1dLayer { channels });
            cnn_case(r, conv)
        }),
        prim!("conv2d_layer", |r| {
            let (n, m) = (r.range(2..=5), r.range(2..=5));
            let channels = (0..r.dim())
                .map(|_| {
                    let k = normal(r, &[r.range(1..=2), r.range(1..=2)]);
                    Conv2dSpec::valid(k, n, m, r.range(1..=2))
                })
                .collect::<Result<Vec<_>>>()?;
            cnn_case(r, Layer::Conv2d(Conv2dLayer { channels }))
        }),
        prim!("pool_layer", |r| {
            let kind = if r.coin() { PoolKind::Max } else { PoolKind::Mean };
            let in_len = r.range(2..=10);
            let size = r.range(1..=in_len);
            cnn_case(r, Layer::Pool(PoolSpec::windows(in_len, size, r.range(1..=2), kind)?))
        }),
        prim!("cnn", |r| {
            let (n, m) = (5, 5);
            let channels = (0..2)
                .map(|_| Conv2dSpec::valid(normal(r, &[2, 2]), n, m, 1))
                .collect::<Result<Vec<_>>>()?;
            let conv = ModelLayer {
                layer: Layer::Conv2d(Conv2dLayer { channels }),
                activation: Some(Activation::Tanh),
            };
            let pool = ModelLayer {
                layer: Layer::Pool(PoolSpec::grid(2, 4, 4, 2, PoolKind::Mean)?),
                activation: None,
            };
            let head = affine(8, 3);
            model_case(Model::new(vec![conv, pool, head])?, r, 2)
        }),
        prim!("mp_generic", |r| mp_case(MpVariant::Generic, r)),
        prim!("mp_kipf_welling", |r| mp_case(MpVariant::KipfWelling, r)),
        prim!("mp_graphsage", |r| mp_case(MpVariant::GraphSage, r)),
        prim!("gat", |r| gat_case(r, true)),
        prim!("gat_no_self_loops", |r| gat_case(r, false)),
        prim!("gcn_encoder_decoder", |r| {
            let n = r.range(2..=7);
            let g = connected_graph(r, n, 0.3);
            graph_case(EncoderDecoder::gcn(&[r.dim(), r.dim(), r.dim()], Activation::Tanh, 3)?, r, g)
        }),
        prim!("cross_entropy", |r| {
            let (n, c) = (r.dim(), r.range(2..=5));
            let labels: Vec<usize> = (0..n).map(|_| r.range(0..c)).collect();
            case(vec![normal(r, &[n, c])], move |v| cross_entropy_var(v[0], &labels))
        }),
        prim!("loss_mse", |r| regression_case(RegressionLoss::Mse, r)),
        prim!("loss_rmse", |r| regression_case(RegressionLoss::Rmse, r)),
        prim!("loss_mae", |r| regression_case(RegressionLoss::Mae, r)),
        prim!("loss_huber", |r| regression_case(RegressionLoss::Huber(1.0), r)),
        prim!("loss_log_cosh", |r| regression_case(RegressionLoss::LogCosh, r)),
    ]
}

fn affine(d: usize, n: usize) -> ModelLayer {
    ModelLayer {
        layer: Layer::Affine(gdl::nn::AffineLayer::zeros(d, n)),
        activation: None,
    }
}

fn cnn_case(r: &Gen, first: Layer) -> Result<Case> {
    let out = first.out_len();
    let act = match first {
        Layer::Pool(_) => None,
        _ => Some(Activation::Tanh),
    };
    let layers = vec![ModelLayer { layer: first, activation: act }, affine(out, 2)];
    model_case(Model::new(layers)?, r, r.dim())
}

fn pool_case(r: &Gen, kind: PoolKind) -> Result<Case> {
    let in_len = r.range(1..=8);
    let windows = (0..r.dim())
        .map(|_| {
            (0..r.dim())
                .map(|_| if r.range(0..5) == 0 { None } else { Some(r.range(0..in_len)) })
                .collect()
        })
        .collect();
    let table = Arc::new(PoolTable { in_len, windows });
    // Distinct magnitudes keep the max unambiguous; the sign keeps it off zero.
    let x = kinkless(r, &[r.dim(), in_len]);
    case(vec![x], move |v| v[0].pool(&table, kind))
}
