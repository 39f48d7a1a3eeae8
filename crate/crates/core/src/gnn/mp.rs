use std::fmt;
use std::str::FromStr;

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::gnn::GraphOps;
use crate::graph::Graph;
use crate::nn::{Activation, ParamSpec};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MpVariant {
    /// `σ(D⁻¹A H Wᵀ + H Bᵀ)`.
    Generic,
    /// `σ(D̂⁻¹Â H Wᵀ)` with `Â = A + I` and `D̂` the degrees of `Â`.
    KipfWelling,
    /// `σ(A H Wᵀ + H Bᵀ)`: the neighbour sum is not normalized.
    GraphSage,
}

impl fmt::Display for MpVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MpVariant::Generic => "mp",
            MpVariant::KipfWelling => "gcn",
            MpVariant::GraphSage => "sage",
        })
    }
}

impl FromStr for MpVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mp" | "generic" => Ok(MpVariant::Generic),
            "gcn" | "kw" | "kipf-welling" => Ok(MpVariant::KipfWelling),
            "sage" | "graphsage" => Ok(MpVariant::GraphSage),
            _ => Err(Error::Config(format!("unknown message passing variant '{s}'"))),
        }
    }
}

/// One message passing layer with weights `W, B: out × in`.
///
/// The Kipf–Welling variant ties `B = W`, so only `W` is stored.
#[derive(Clone, Debug, PartialEq)]
pub struct MessagePassingLayer {
    pub variant: MpVariant,
    pub w: Tensor,
    pub b: Option<Tensor>,
    pub activation: Activation,
}

impl MessagePassingLayer {
    pub fn zeros(variant: MpVariant, in_dim: usize, out_dim: usize, activation: Activation) -> Self {
        let b = (variant != MpVariant::KipfWelling).then(|| Tensor::zeros(&[out_dim, in_dim]));
        MessagePassingLayer {
            variant,
            w: Tensor::zeros(&[out_dim, in_dim]),
            b,
            activation,
        }
    }

    pub fn new(variant: MpVariant, w: Tensor, b: Option<Tensor>, activation: Activation) -> Result<Self> {
        w.dims2()?;
        activation.validate()?;
        let b = match (variant, b) {
            (MpVariant::KipfWelling, Some(b)) if b != w => {
                return Err(Error::Config("the Kipf–Welling layer requires B = W".into()))
            }
            (MpVariant::KipfWelling, _) => None,
            (_, Some(b)) if b.shape() != w.shape() => return Err(Error::shape("message passing B", w.shape(), b.shape())),
            (_, Some(b)) => Some(b),
            (_, None) => Some(Tensor::zeros(w.shape())),
        };
        Ok(MessagePassingLayer { variant, w, b, activation })
    }

    pub fn in_dim(&self) -> usize {
        self.w.shape()[1]
    }

    pub fn out_dim(&self) -> usize {
        self.w.shape()[0]
    }

    pub fn param_specs(&self) -> Vec<ParamSpec> {
        let (i, o) = (self.in_dim(), self.out_dim());
        let mut specs = vec![ParamSpec::weight(&[o, i], i, o)];
        if self.b.is_some() {
            specs.push(ParamSpec::weight(&[o, i], i, o));
        }
        specs
    }

    pub fn params(&self) -> Vec<&Tensor> {
        std::iter::once(&self.w).chain(self.b.as_ref()).collect()
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
        self.w = params[0].clone();
        if let Some(b) = &mut self.b {
            *b = params[1].clone();
        }
        Ok(())
    }

    pub fn forward_var<'t>(&self, params: &[Var<'t>], ops: &GraphOps, h: Var<'t>) -> Result<Var<'t>> {
        check_features(&h.shape(), ops.graph().n_nodes(), self.in_dim())?;
        let w = params[0];
        let z = match self.variant {
            MpVariant::Generic => {
                let agg = h.spmm(ops.mean()?)?.matmul_t(w)?;
                agg.add(h.matmul_t(params[1])?)?
            }
            MpVariant::KipfWelling => h.spmm(ops.kipf_welling())?.matmul_t(w)?,
            MpVariant::GraphSage => {
                let agg = h.spmm(ops.sum())?.matmul_t(w)?;
                agg.add(h.matmul_t(params[1])?)?
            }
        };
        Ok(self.activation.apply_var(z))
    }

    /// Evaluates the layer on `H: |V| × in`.
    pub fn forward(&self, g: &Graph, h: &Tensor) -> Result<Tensor> {
        let ops = GraphOps::new(g);
        let tape = Tape::new();
        let params: Vec<_> = self.params().into_iter().map(|p| tape.constant(p.clone())).collect();
        let out = self.forward_var(&params, &ops, tape.constant(h.clone()))?;
        Ok(out.value().as_ref().clone())
    }
}

pub(crate) fn check_features(shape: &[usize], n: usize, d: usize) -> Result<()> {
    if shape != [n, d] {
        return Err(Error::shape("node features", &[n, d], shape));
    }
    Ok(())
}

/// `H^k` from `H^{k−1}` for one message passing layer.
pub fn mp_forward(layer: &MessagePassingLayer, g: &Graph, h: &Tensor) -> Result<Tensor> {
    layer.forward(g, h)
}
