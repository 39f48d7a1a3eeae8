//! Message passing and graph attention layers, and encoder/decoder node
//! classifiers built from them.

mod gat;
mod mp;

pub use gat::{gat_attention, gat_attention_with, gat_forward, Attention, GatLayer};
pub use mp::{mp_forward, MessagePassingLayer, MpVariant};

use std::path::Path;
use std::sync::Arc;

use crate::autodiff::{SparseOp, Tape, Var};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::nn::checkpoint::{self, Record, KIND_GAT, KIND_MP_GENERIC, KIND_MP_KIPF_WELLING, KIND_MP_SAGE};
use crate::nn::{Activation, Model, ParamSpec, Parameterized};
use crate::tensor::Tensor;

/// Flattened neighbourhoods: segment `v` of `neighbors` (from `offsets[v]` to
/// `offsets[v + 1]`) lists the nodes `v` attends to; `centers` repeats `v`.
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionEdges {
    pub offsets: Arc<[usize]>,
    pub centers: Vec<usize>,
    pub neighbors: Vec<usize>,
}

impl AttentionEdges {
    fn build(g: &Graph, self_loops: bool) -> Self {
        let mut offsets = vec![0];
        let (mut centers, mut neighbors) = (Vec::new(), Vec::new());
        for v in 0..g.n_nodes() {
            let mut nbrs: Vec<usize> = g.neighbors(v).to_vec();
            if self_loops {
                let pos = nbrs.binary_search(&v).unwrap_err();
                nbrs.insert(pos, v);
            }
            centers.extend(std::iter::repeat_n(v, nbrs.len()));
            neighbors.extend(nbrs);
            offsets.push(neighbors.len());
        }
        AttentionEdges {
            offsets: offsets.into(),
            centers,
            neighbors,
        }
    }
}

/// Sparse propagation operators of a graph, built once and shared by every
/// layer and training step.
#[derive(Debug)]
pub struct GraphOps {
    graph: Graph,
    mean: Option<Arc<SparseOp>>,
    sum: Arc<SparseOp>,
    kipf_welling: Arc<SparseOp>,
    attention: AttentionEdges,
    attention_self: AttentionEdges,
}

impl GraphOps {
    pub fn new(g: &Graph) -> Self {
        GraphOps {
            graph: g.clone(),
            mean: g.mean_operator().ok().map(SparseOp::new),
            sum: SparseOp::new(g.sum_operator()),
            kipf_welling: SparseOp::new(g.kipf_welling_operator()),
            attention: AttentionEdges::build(g, false),
            attention_self: AttentionEdges::build(g, true),
        }
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    /// `D⁻¹A`; fails on graphs with an isolated node.
    pub fn mean(&self) -> Result<&Arc<SparseOp>> {
        self.mean.as_ref().ok_or_else(|| Error::IsolatedNode(self.graph.isolated_node().unwrap()))
    }

    pub fn sum(&self) -> &Arc<SparseOp> {
        &self.sum
    }

    pub fn kipf_welling(&self) -> &Arc<SparseOp> {
        &self.kipf_welling
    }

    pub fn attention_edges(&self, self_loops: bool) -> Result<&AttentionEdges> {
        if self_loops {
            return Ok(&self.attention_self);
        }
        self.graph.require_no_isolated()?;
        Ok(&self.attention)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum EncoderLayer {
    Mp(MessagePassingLayer),
    Gat(GatLayer),
}

impl EncoderLayer {
    pub fn in_dim(&self) -> usize {
        match self {
            EncoderLayer::Mp(l) => l.in_dim(),
            EncoderLayer::Gat(l) => l.in_dim(),
        }
    }

    pub fn out_dim(&self) -> usize {
        match self {
            EncoderLayer::Mp(l) => l.out_dim(),
            EncoderLayer::Gat(l) => l.out_dim(),
        }
    }

    pub fn param_specs(&self) -> Vec<ParamSpec> {
        match self {
            EncoderLayer::Mp(l) => l.param_specs(),
            EncoderLayer::Gat(l) => l.param_specs(),
        }
    }

    pub fn params(&self) -> Vec<&Tensor> {
        match self {
            EncoderLayer::Mp(l) => l.params(),
            EncoderLayer::Gat(l) => l.params(),
        }
    }

    pub fn set_params(&mut self, params: &[Tensor]) -> Result<()> {
        match self {
            EncoderLayer::Mp(l) => l.set_params(params),
            EncoderLayer::Gat(l) => l.set_params(params),
        }
    }

    pub fn forward_var<'t>(&self, params: &[Var<'t>], ops: &GraphOps, h: Var<'t>) -> Result<Var<'t>> {
        match self {
            EncoderLayer::Mp(l) => l.forward_var(params, ops, h),
            EncoderLayer::Gat(l) => l.forward_var(params, ops, h),
        }
    }
}

/// Encoder layers producing node embeddings, followed by an optional
/// row-wise decoder producing class scores.
#[derive(Clone, Debug)]
pub struct EncoderDecoder {
    encoder: Vec<EncoderLayer>,
    decoder: Option<Model>,
}

impl EncoderDecoder {
    pub fn new(encoder: Vec<EncoderLayer>, decoder: Option<Model>) -> Result<Self> {
        if encoder.is_empty() {
            return Err(Error::Config("the encoder has no layers".into()));
        }
        for (i, pair) in encoder.windows(2).enumerate() {
            if pair[0].out_dim() != pair[1].in_dim() {
                return Err(Error::LayerShape {
                    layer: i + 1,
                    expected: pair[1].in_dim(),
                    found: pair[0].out_dim(),
                });
            }
        }
        if let Some(d) = &decoder {
            let out = encoder.last().unwrap().out_dim();
            if d.in_len() != out {
                return Err(Error::LayerShape {
                    layer: encoder.len(),
                    expected: d.in_len(),
                    found: out,
                });
            }
        }
        Ok(EncoderDecoder { encoder, decoder })
    }

    /// Stacked Kipf–Welling layers `dims[0] → … → dims[L]` with activation
    /// `σ`, then a linear decoder `dims[L] → classes`.
    pub fn gcn(dims: &[usize], activation: Activation, classes: usize) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::Config(format!("bad GCN widths {dims:?}")));
        }
        let encoder = dims
            .windows(2)
            .map(|w| EncoderLayer::Mp(MessagePassingLayer::zeros(MpVariant::KipfWelling, w[0], w[1], activation)))
            .collect();
        let decoder = Model::mlp(&[*dims.last().unwrap(), classes], Activation::Identity)?;
        Self::new(encoder, Some(decoder))
    }

    /// `σ(GAT(in, hidden) × heads)` followed by a single-head GAT to `classes`.
    pub fn gat(in_dim: usize, hidden: usize, heads: usize, classes: usize, activation: Activation, self_loops: bool) -> Result<Self> {
        Self::new(
            vec![
                EncoderLayer::Gat(GatLayer::zeros(in_dim, hidden, heads, activation, self_loops)),
                EncoderLayer::Gat(GatLayer::zeros(heads * hidden, classes, 1, Activation::Identity, self_loops)),
            ],
            None,
        )
    }

    pub fn encoder(&self) -> &[EncoderLayer] {
        &self.encoder
    }

    pub fn decoder(&self) -> Option<&Model> {
        self.decoder.as_ref()
    }

    pub fn in_dim(&self) -> usize {
        self.encoder[0].in_dim()
    }

    pub fn classes(&self) -> usize {
        match &self.decoder {
            Some(d) => d.out_len(),
            None => self.encoder.last().unwrap().out_dim(),
        }
    }

    /// Class scores `|V| × C` on the tape.
    pub fn forward_var<'t>(&self, params: &[Var<'t>], ops: &GraphOps, h0: Var<'t>) -> Result<Var<'t>> {
        let mut h = h0;
        let mut offset = 0;
        for layer in &self.encoder {
            let k = layer.param_specs().len();
            h = layer.forward_var(&params[offset..offset + k], ops, h)?;
            offset += k;
        }
        match &self.decoder {
            Some(d) => d.forward_var(&params[offset..], h),
            None => Ok(h),
        }
    }

    /// Node embeddings after the encoder.
    pub fn embed(&self, ops: &GraphOps, h0: &Tensor) -> Result<Tensor> {
        let tape = Tape::new();
        let params = self.constants(&tape);
        let mut h = tape.constant(h0.clone());
        let mut offset = 0;
        for layer in &self.encoder {
            let k = layer.param_specs().len();
            h = layer.forward_var(&params[offset..offset + k], ops, h)?;
            offset += k;
        }
        Ok(h.value().as_ref().clone())
    }

    pub fn score(&self, ops: &GraphOps, h0: &Tensor) -> Result<Tensor> {
        let tape = Tape::new();
        let params = self.constants(&tape);
        Ok(self.forward_var(&params, ops, tape.constant(h0.clone()))?.value().as_ref().clone())
    }

    fn constants<'t>(&self, tape: &'t Tape) -> Vec<Var<'t>> {
        self.params().into_iter().map(|p| tape.constant(p.clone())).collect()
    }

    pub fn to_records(&self) -> Result<Vec<Record>> {
        let mut out = Vec::new();
        for layer in &self.encoder {
            out.push(match layer {
                EncoderLayer::Mp(l) => Record {
                    kind: match l.variant {
                        MpVariant::Generic => KIND_MP_GENERIC,
                        MpVariant::KipfWelling => KIND_MP_KIPF_WELLING,
                        MpVariant::GraphSage => KIND_MP_SAGE,
                    },
                    activation: Some(l.activation),
                    dims: vec![l.in_dim() as u64, l.out_dim() as u64],
                    weights: flat(&l.params()),
                },
                EncoderLayer::Gat(l) => {
                    if l.attention_slope != crate::nn::activation::DEFAULT_LEAKY_SLOPE {
                        return Err(Error::BadCheckpoint("custom attention slope is not storable".into()));
                    }
                    Record {
                        kind: KIND_GAT,
                        activation: Some(l.activation),
                        dims: vec![l.in_dim() as u64, l.head_dim() as u64, l.heads() as u64, l.self_loops as u64],
                        weights: flat(&l.params()),
                    }
                }
            });
        }
        if let Some(d) = &self.decoder {
            out.extend(d.to_records()?);
        }
        Ok(out)
    }

    pub fn from_records(records: &[Record]) -> Result<Self> {
        let split = records.iter().position(|r| r.kind < KIND_MP_GENERIC).unwrap_or(records.len());
        let mut encoder = Vec::with_capacity(split);
        for r in &records[..split] {
            let act = r.activation.unwrap_or(Activation::Identity);
            let d: Vec<usize> = r.dims.iter().map(|&v| v as usize).collect();
            let mut layer = match r.kind {
                KIND_MP_GENERIC => EncoderLayer::Mp(MessagePassingLayer::zeros(MpVariant::Generic, d[0], d[1], act)),
                KIND_MP_KIPF_WELLING => EncoderLayer::Mp(MessagePassingLayer::zeros(MpVariant::KipfWelling, d[0], d[1], act)),
                KIND_MP_SAGE => EncoderLayer::Mp(MessagePassingLayer::zeros(MpVariant::GraphSage, d[0], d[1], act)),
                KIND_GAT if d[3] <= 1 && d[2] >= 1 => EncoderLayer::Gat(GatLayer::zeros(d[0], d[1], d[2], act, d[3] == 1)),
                k => return Err(Error::BadCheckpoint(format!("unexpected encoder record kind {k}"))),
            };
            let tensors = split_weights(&layer.param_specs(), &r.weights)?;
            layer.set_params(&tensors)?;
            encoder.push(layer);
        }
        let decoder = if split < records.len() {
            Some(Model::from_records(&records[split..])?)
        } else {
            None
        };
        Self::new(encoder, decoder).map_err(|e| Error::BadCheckpoint(e.to_string()))
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        checkpoint::encode(&self.to_records()?)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        Self::from_records(&checkpoint::decode(bytes, any_weights_len)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        checkpoint::write_file(path, &self.to_records()?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&checkpoint::read_bytes(path)?)
    }
}

fn flat(ts: &[&Tensor]) -> Vec<f64> {
    ts.iter().flat_map(|t| t.data().iter().copied()).collect()
}

fn split_weights(specs: &[ParamSpec], w: &[f64]) -> Result<Vec<Tensor>> {
    let total: usize = specs.iter().map(ParamSpec::len).sum();
    if total != w.len() {
        return Err(Error::BadCheckpoint("weight count does not match dims".into()));
    }
    let mut offset = 0;
    specs
        .iter()
        .map(|s| {
            let t = Tensor::new(s.shape.clone(), w[offset..offset + s.len()].to_vec());
            offset += s.len();
            t
        })
        .collect()
}

/// Weight count for any record kind, feed-forward or graph.
pub fn any_weights_len(kind: u8, dims: &[u64]) -> Result<usize> {
    let mul = |a: u64, b: u64| {
        a.checked_mul(b)
            .and_then(|v| usize::try_from(v).ok())
            .ok_or_else(|| Error::BadCheckpoint("dimension product overflows".into()))
    };
    match kind {
        KIND_MP_GENERIC | KIND_MP_SAGE => Ok(2 * mul(dims[0], dims[1])?),
        KIND_MP_KIPF_WELLING => mul(dims[0], dims[1]),
        KIND_GAT => {
            let per_head = mul(dims[0] + 2, dims[1])?;
            mul(per_head as u64, dims[2])
        }
        _ => checkpoint::layer_weights_len(kind, dims),
    }
}

impl Parameterized for EncoderDecoder {
    fn param_specs(&self) -> Vec<ParamSpec> {
        let mut specs: Vec<_> = self.encoder.iter().flat_map(EncoderLayer::param_specs).collect();
        if let Some(d) = &self.decoder {
            specs.extend(d.param_specs());
        }
        specs
    }

    fn params(&self) -> Vec<&Tensor> {
        let mut ps: Vec<_> = self.encoder.iter().flat_map(EncoderLayer::params).collect();
        if let Some(d) = &self.decoder {
            ps.extend(d.params());
        }
        ps
    }

    fn set_params(&mut self, params: &[Tensor]) -> Result<()> {
        let total = self.param_specs().len();
        if params.len() != total {
            return Err(Error::Config(format!("expected {total} parameter tensors, got {}", params.len())));
        }
        let mut offset = 0;
        for layer in &mut self.encoder {
            let k = layer.param_specs().len();
            layer.set_params(&params[offset..offset + k])?;
            offset += k;
        }
        if let Some(d) = &mut self.decoder {
            d.set_params(&params[offset..])?;
        }
        Ok(())
    }
}

/// One row of class scores per node.
pub fn gnn_score(model: &EncoderDecoder, g: &Graph, h0: &Tensor) -> Result<Tensor> {
    model.score(&GraphOps::new(g), h0)
}

/// Row-wise argmax; ties go to the lowest class index.
pub fn predict_labels(scores: &Tensor) -> Vec<usize> {
    let c = scores.shape().last().copied().unwrap_or(1).max(1);
    scores
        .data()
        .chunks(c)
        .map(|row| {
            let mut best = 0;
            for (k, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = k;
                }
            }
            best
        })
        .collect()
}
