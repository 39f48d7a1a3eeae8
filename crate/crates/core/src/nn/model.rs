use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::nn::activation::Activation;
use crate::nn::layer::{AffineLayer, Layer, ParamSpec};
use crate::tensor::Tensor;

/// Anything carrying an ordered list of parameter tensors.
///
/// The flat weight vector is the row-major concatenation of the tensors in
/// `params()` order.
pub trait Parameterized {
    fn param_specs(&self) -> Vec<ParamSpec>;

    fn params(&self) -> Vec<&Tensor>;

    fn set_params(&mut self, params: &[Tensor]) -> Result<()>;

    fn n_params(&self) -> usize {
        self.param_specs().iter().map(ParamSpec::len).sum()
    }

    fn weights_flat(&self) -> Tensor {
        let data: Vec<f64> = self.params().iter().flat_map(|t| t.data().iter().copied()).collect();
        if data.is_empty() {
            return Tensor::zeros(&[1]);
        }
        Tensor::vector(data)
    }

    fn set_weights_flat(&mut self, w: &Tensor) -> Result<()> {
        let specs = self.param_specs();
        let total: usize = specs.iter().map(ParamSpec::len).sum();
        if w.len() != total {
            return Err(Error::shape("set_weights_flat", &[total], w.shape()));
        }
        let mut offset = 0;
        let mut tensors = Vec::with_capacity(specs.len());
        for s in &specs {
            tensors.push(Tensor::new(s.shape.clone(), w.data()[offset..offset + s.len()].to_vec())?);
            offset += s.len();
        }
        self.set_params(&tensors)
    }

    /// Registers every parameter tensor as a differentiable leaf.
    fn bind<'t>(&self, tape: &'t Tape) -> Vec<Var<'t>> {
        self.params().into_iter().map(|p| tape.var(p.clone())).collect()
    }

    /// Views a flat weight variable as the individual parameter tensors.
    fn unflatten<'t>(&self, w: Var<'t>) -> Result<Vec<Var<'t>>> {
        let mut offset = 0;
        let mut out = Vec::new();
        for s in self.param_specs() {
            out.push(w.slice(offset, &s.shape)?);
            offset += s.len();
        }
        Ok(out)
    }
}

#[derive(Clone, Debug)]
pub struct ModelLayer {
    pub layer: Layer,
    pub activation: Option<Activation>,
}

/// A feed-forward network `G ∘ H_{L−1} ∘ ⋯ ∘ H_1` whose closing map `G` is
/// affine without activation.
#[derive(Clone, Debug)]
pub struct Model {
    layers: Vec<ModelLayer>,
}

impl Model {
    pub fn new(layers: Vec<ModelLayer>) -> Result<Self> {
        let last = layers.last().ok_or_else(|| Error::Config("model has no layers".into()))?;
        if !matches!(last.layer, Layer::Affine(_)) || last.activation.is_some() {
            return Err(Error::Config("the final layer must be affine without activation".into()));
        }
        for (i, pair) in layers.windows(2).enumerate() {
            let (out, inp) = (pair[0].layer.out_len(), pair[1].layer.in_len());
            if out != inp {
                return Err(Error::LayerShape {
                    layer: i + 1,
                    expected: inp,
                    found: out,
                });
            }
        }
        for l in &layers {
            if let Some(a) = l.activation {
                a.validate()?;
            }
        }
        Ok(Model { layers })
    }

    /// A σ-MLP with widths `dims[0] → … → dims[L]`, all weights zero.
    pub fn mlp(dims: &[usize], activation: Activation) -> Result<Self> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(Error::Config(format!("bad MLP widths {dims:?}")));
        }
        let n = dims.len() - 1;
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(i, w)| ModelLayer {
                layer: Layer::Affine(AffineLayer::zeros(w[0], w[1])),
                activation: (i + 1 < n).then_some(activation),
            })
            .collect();
        Self::new(layers)
    }

    pub fn layers(&self) -> &[ModelLayer] {
        &self.layers
    }

    pub fn in_len(&self) -> usize {
        self.layers[0].layer.in_len()
    }

    pub fn out_len(&self) -> usize {
        self.layers.last().unwrap().layer.out_len()
    }

    /// Differentiable forward on a `batch × in_len` matrix.
    pub fn forward_var<'t>(&self, params: &[Var<'t>], x: Var<'t>) -> Result<Var<'t>> {
        let width = *x.shape().last().unwrap_or(&1);
        if x.shape().len() != 2 || width != self.in_len() {
            return Err(Error::LayerShape {
                layer: 0,
                expected: self.in_len(),
                found: width,
            });
        }
        let mut h = x;
        let mut offset = 0;
        for l in &self.layers {
            let k = l.layer.param_specs().len();
            h = l.layer.forward_var(&params[offset..offset + k], h)?;
            if let Some(a) = l.activation {
                h = a.apply_var(h);
            }
            offset += k;
        }
        Ok(h)
    }

    /// Evaluates the model on a `d`-vector or on each row of a `batch × d` matrix.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let tape = Tape::new();
        let params: Vec<Var<'_>> = self.params().into_iter().map(|p| tape.constant(p.clone())).collect();
        let single = x.ndim() == 1;
        let input = if single { x.reshape(&[1, x.len()])? } else { x.clone() };
        let y = self.forward_var(&params, tape.constant(input))?.value();
        if single {
            y.reshape(&[self.out_len()])
        } else {
            Ok(y.as_ref().clone())
        }
    }
}

pub fn model_forward(m: &Model, x: &Tensor) -> Result<Tensor> {
    m.forward(x)
}

impl Parameterized for Model {
    fn param_specs(&self) -> Vec<ParamSpec> {
        self.layers.iter().flat_map(|l| l.layer.param_specs()).collect()
    }

    fn params(&self) -> Vec<&Tensor> {
        self.layers.iter().flat_map(|l| l.layer.params()).collect()
    }

    fn set_params(&mut self, params: &[Tensor]) -> Result<()> {
        let total = self.param_specs().len();
        if params.len() != total {
            return Err(Error::Config(format!("expected {total} parameter tensors, got {}", params.len())));
        }
        let mut offset = 0;
        for l in &mut self.layers {
            let k = l.layer.param_specs().len();
            l.layer.set_params(&params[offset..offset + k])?;
            offset += k;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::conv::{Conv2dSpec, PoolSpec};
    use crate::nn::layer::Conv2dLayer;
    use crate::autodiff::PoolKind;

    #[test]
    fn zero_mlp_outputs_zero() {
        let m = Model::mlp(&[3, 4, 2], Activation::Relu).unwrap();
        let y = m.forward(&Tensor::vector(vec![0.3, -7.0, 2.0])).unwrap();
        assert_eq!(y.data(), &[0.0, 0.0]);
    }

    #[test]
    fn two_layer_relu_composition() {
        let mut m = Model::mlp(&[2, 2, 2], Activation::Relu).unwrap();
        m.set_params(&[
            Tensor::identity(2),
            Tensor::zeros(&[2]),
            Tensor::identity(2),
            Tensor::zeros(&[2]),
        ])
        .unwrap();
        let y = m.forward(&Tensor::vector(vec![-1.0, 2.0])).unwrap();
        assert_eq!(y.data(), &[0.0, 2.0]);
    }

    #[test]
    fn mnist_shape_mlp() {
        let m = Model::mlp(&[784, 500, 10], Activation::Relu).unwrap();
        assert_eq!(m.n_params(), 784 * 500 + 500 + 500 * 10 + 10);
        let y = m.forward(&Tensor::zeros(&[784])).unwrap();
        assert_eq!(y.shape(), &[10]);
        assert!(matches!(
            m.forward(&Tensor::zeros(&[783])),
            Err(Error::LayerShape { layer: 0, .. })
        ));
    }

    #[test]
    fn composition_is_validated() {
        let bad = Model::new(vec![
            ModelLayer {
                layer: Layer::Affine(AffineLayer::zeros(3, 4)),
                activation: Some(Activation::Relu),
            },
            ModelLayer {
                layer: Layer::Affine(AffineLayer::zeros(5, 2)),
                activation: None,
            },
        ]);
        assert!(matches!(bad, Err(Error::LayerShape { layer: 1, .. })));
        let no_final_affine = Model::new(vec![ModelLayer {
            layer: Layer::Affine(AffineLayer::zeros(3, 4)),
            activation: Some(Activation::Relu),
        }]);
        assert!(no_final_affine.is_err());
    }

    #[test]
    fn flat_weight_view_roundtrip() {
        let mut m = Model::mlp(&[3, 2, 2], Activation::Tanh).unwrap();
        let w = Tensor::vector((0..m.n_params()).map(|v| v as f64).collect());
        m.set_weights_flat(&w).unwrap();
        assert_eq!(m.weights_flat(), w);
        assert_eq!(m.params()[0].data(), &[0.0, 1.0, 2.0, 3.0, 4.0, 5.0]);
    }

    #[test]
    fn small_cnn_forward_shapes() {
        let conv = Conv2dLayer {
            channels: (0..2)
                .map(|_| Conv2dSpec::valid(Tensor::zeros(&[3, 3]), 6, 6, 1).unwrap())
                .collect(),
        };
        let m = Model::new(vec![
            ModelLayer {
                layer: Layer::Conv2d(conv),
                activation: Some(Activation::Relu),
            },
            ModelLayer {
                layer: Layer::Pool(PoolSpec::grid(2, 4, 4, 2, PoolKind::Max).unwrap()),
                activation: None,
            },
            ModelLayer {
                layer: Layer::Affine(AffineLayer::zeros(8, 3)),
                activation: None,
            },
        ])
        .unwrap();
        let y = m.forward(&Tensor::zeros(&[5, 36])).unwrap();
        assert_eq!(y.shape(), &[5, 3]);
    }
}
