use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::gnn::mp::check_features;
use crate::gnn::{AttentionEdges, GraphOps};
use crate::graph::Graph;
use crate::nn::activation::DEFAULT_LEAKY_SLOPE;
use crate::nn::{Activation, ParamSpec};
use crate::tensor::Tensor;

/// Graph attention layer with `K` heads concatenated along features.
///
/// Head `k` computes `σ(Σ_{u∈N(v)} α_vu W_k h_u)` with
/// `α_vu = softmax_u LeakyReLU(a_kᵀ[W_k h_v ‖ W_k h_u])`.
#[derive(Clone, Debug, PartialEq)]
pub struct GatLayer {
    /// Per head, `d′ × d`.
    pub w: Vec<Tensor>,
    /// Per head, length `2d′`.
    pub a: Vec<Tensor>,
    pub activation: Activation,
    pub attention_slope: f64,
    /// Whether `v` attends to itself as well as to `N(v)`.
    pub self_loops: bool,
}

impl GatLayer {
    pub fn zeros(in_dim: usize, out_dim: usize, heads: usize, activation: Activation, self_loops: bool) -> Self {
        GatLayer {
            w: vec![Tensor::zeros(&[out_dim, in_dim]); heads],
            a: vec![Tensor::zeros(&[2 * out_dim]); heads],
            activation,
            attention_slope: DEFAULT_LEAKY_SLOPE,
            self_loops,
        }
    }

    pub fn new(w: Vec<Tensor>, a: Vec<Tensor>, activation: Activation, self_loops: bool) -> Result<Self> {
        let first = w.first().ok_or_else(|| Error::Config("a GAT layer needs at least one head".into()))?;
        let (o, _) = first.dims2()?;
        if w.len() != a.len() {
            return Err(Error::Config(format!("{} weight heads but {} attention vectors", w.len(), a.len())));
        }
        for (wk, ak) in w.iter().zip(&a) {
            if wk.shape() != first.shape() {
                return Err(Error::shape("GAT head", first.shape(), wk.shape()));
            }
            if ak.len() != 2 * o {
                return Err(Error::shape("GAT attention vector", &[2 * o], ak.shape()));
            }
        }
        activation.validate()?;
        Ok(GatLayer {
            a: a.into_iter().map(|t| t.reshape(&[2 * o])).collect::<Result<_>>()?,
            w,
            activation,
            attention_slope: DEFAULT_LEAKY_SLOPE,
            self_loops,
        })
    }

    pub fn heads(&self) -> usize {
        self.w.len()
    }

    pub fn in_dim(&self) -> usize {
        self.w[0].shape()[1]
    }

    pub fn head_dim(&self) -> usize {
        self.w[0].shape()[0]
    }

    /// `K · d′`.
    pub fn out_dim(&self) -> usize {
        self.heads() * self.head_dim()
    }

    pub fn param_specs(&self) -> Vec<ParamSpec> {
        let (i, o) = (self.in_dim(), self.head_dim());
        (0..self.heads())
            .flat_map(|_| [ParamSpec::weight(&[o, i], i, o), ParamSpec::weight(&[2 * o], 2 * o, 1)])
            .collect()
    }

    pub fn params(&self) -> Vec<&Tensor> {
        self.w.iter().zip(&self.a).flat_map(|(w, a)| [w, a]).collect()
    }

    pub fn set_params(&mut self, params: &[Tensor]) -> Result<()> {
        let specs = self.param_specs();
        if params.len() != specs.len() {
            return Err(Error::Config(format!("expected {} tensors, got {}", specs.len(), params.len())));
        }
        for (p, s) in params.iter().zip(&specs) {
            if p.shape() != s.shape.as_slice() {
                return Err(Error::shape("set_params", &s.shape, p.shape()));
            }
        }
        for k in 0..self.heads() {
            self.w[k] = params[2 * k].clone();
            self.a[k] = params[2 * k + 1].clone();
        }
        Ok(())
    }

    fn edges<'g>(&self, ops: &'g GraphOps) -> Result<&'g AttentionEdges> {
        ops.attention_edges(self.self_loops)
    }

    /// Per-head attention weights on the edge list of `ops`.
    fn head_attention<'t>(&self, w: Var<'t>, a: Var<'t>, edges: &AttentionEdges, h: Var<'t>) -> Result<(Var<'t>, Var<'t>)> {
        let o = self.head_dim();
        let z = h.matmul_t(w)?;
        let a_self = a.slice(0, &[o, 1])?;
        let a_nbr = a.slice(o, &[o, 1])?;
        let left = z.matmul(a_self)?.gather_rows(&edges.centers)?;
        let right = z.matmul(a_nbr)?.gather_rows(&edges.neighbors)?;
        let logits = left.add(right)?.leaky_relu(self.attention_slope).reshape(&[edges.neighbors.len()])?;
        Ok((logits.segment_softmax(&edges.offsets)?, z))
    }

    pub fn forward_var<'t>(&self, params: &[Var<'t>], ops: &GraphOps, h: Var<'t>) -> Result<Var<'t>> {
        check_features(&h.shape(), ops.graph().n_nodes(), self.in_dim())?;
        let edges = self.edges(ops)?;
        let heads = (0..self.heads())
            .map(|k| {
                let (alpha, z) = self.head_attention(params[2 * k], params[2 * k + 1], edges, h)?;
                let msg = z.gather_rows(&edges.neighbors)?.scale_rows(alpha)?;
                Ok(self.activation.apply_var(msg.segment_sum(&edges.offsets)?))
            })
            .collect::<Result<Vec<_>>>()?;
        if heads.len() == 1 {
            return Ok(heads[0]);
        }
        Var::concat_cols(&heads)
    }

    pub fn forward(&self, g: &Graph, h: &Tensor) -> Result<Tensor> {
        let ops = GraphOps::new(g);
        let tape = Tape::new();
        let params: Vec<_> = self.params().into_iter().map(|p| tape.constant(p.clone())).collect();
        let out = self.forward_var(&params, &ops, tape.constant(h.clone()))?;
        Ok(out.value().as_ref().clone())
    }
}

/// Attention coefficients of every head over the neighbourhoods of a graph.
#[derive(Clone, Debug)]
pub struct Attention {
    pub edges: AttentionEdges,
    /// `heads × |edges|`, aligned with `edges.neighbors`.
    pub weights: Vec<Vec<f64>>,
}

impl Attention {
    /// `(u, α_vu)` pairs of head `k` at node `v`.
    pub fn row(&self, k: usize, v: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.edges.offsets[v]..self.edges.offsets[v + 1];
        self.edges.neighbors[span.clone()]
            .iter()
            .copied()
            .zip(self.weights[k][span].iter().copied())
    }

    /// Largest `|Σ_u α_vu − 1|` over heads and nodes.
    pub fn max_row_sum_error(&self) -> f64 {
        let n = self.edges.offsets.len() - 1;
        let mut worst: f64 = 0.0;
        for k in 0..self.weights.len() {
            for v in 0..n {
                let s: f64 = self.row(k, v).map(|(_, a)| a).sum();
                worst = worst.max((s - 1.0).abs());
            }
        }
        worst
    }

    pub fn min_weight(&self) -> f64 {
        self.weights.iter().flatten().copied().fold(f64::INFINITY, f64::min)
    }
}

pub fn gat_attention_with(layer: &GatLayer, ops: &GraphOps, h: &Tensor) -> Result<Attention> {
    check_features(h.shape(), ops.graph().n_nodes(), layer.in_dim())?;
    let edges = layer.edges(ops)?;
    let tape = Tape::new();
    let x = tape.constant(h.clone());
    let weights = (0..layer.heads())
        .map(|k| {
            let (alpha, _) = layer.head_attention(tape.constant(layer.w[k].clone()), tape.constant(layer.a[k].clone()), edges, x)?;
            Ok(alpha.value().data().to_vec())
        })
        .collect::<Result<_>>()?;
    Ok(Attention {
        edges: edges.clone(),
        weights,
    })
}

/// The softmax-normalized coefficients `α_vu` of each head.
pub fn gat_attention(layer: &GatLayer, g: &Graph, h: &Tensor) -> Result<Attention> {
    gat_attention_with(layer, &GraphOps::new(g), h)
}

pub fn gat_forward(layer: &GatLayer, g: &Graph, h: &Tensor) -> Result<Tensor> {
    layer.forward(g, h)
}
