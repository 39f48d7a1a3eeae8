use crate::autodiff::Var;
use crate::error::{Error, Result};
use crate::nn::conv::{Conv1dSpec, Conv2dSpec, PoolSpec};
use crate::tensor::Tensor;

/// Shape and initialization role of one parameter tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamSpec {
    pub shape: Vec<usize>,
    pub role: ParamRole,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ParamRole {
    Weight { fan_in: usize, fan_out: usize },
    Bias,
}

impl ParamSpec {
    pub fn weight(shape: &[usize], fan_in: usize, fan_out: usize) -> Self {
        ParamSpec {
            shape: shape.to_vec(),
            role: ParamRole::Weight { fan_in, fan_out },
        }
    }

    pub fn bias(shape: &[usize]) -> Self {
        ParamSpec {
            shape: shape.to_vec(),
            role: ParamRole::Bias,
        }
    }

    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// `x ↦ xW + b` with `W: d × n`.
#[derive(Clone, Debug, PartialEq)]
pub struct AffineLayer {
    pub w: Tensor,
    pub b: Tensor,
}

impl AffineLayer {
    pub fn new(w: Tensor, b: Tensor) -> Result<Self> {
        let (_, n) = w.dims2()?;
        if b.len() != n {
            return Err(Error::shape("affine bias", &[n], b.shape()));
        }
        Ok(AffineLayer {
            w,
            b: b.reshape(&[n])?,
        })
    }

    pub fn zeros(d: usize, n: usize) -> Self {
        AffineLayer {
            w: Tensor::zeros(&[d, n]),
            b: Tensor::zeros(&[n]),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.w.shape()[0]
    }

    pub fn out_dim(&self) -> usize {
        self.w.shape()[1]
    }

    /// Maps each row of a `batch × d` matrix.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let (_, d) = x.dims2()?;
        if d != self.in_dim() {
            return Err(Error::shape("affine", x.shape(), self.w.shape()));
        }
        x.matmul(&self.w)?.add_row(&self.b)
    }
}

/// Row-wise affine map of a batch.
pub fn affine_forward(layer: &AffineLayer, x: &Tensor) -> Result<Tensor> {
    layer.forward(x)
}

/// `e` independent one-output-channel convolutions with stacked outputs.
#[derive(Clone, Debug)]
pub struct Conv1dLayer {
    pub channels: Vec<Conv1dSpec>,
}

#[derive(Clone, Debug)]
pub struct Conv2dLayer {
    pub channels: Vec<Conv2dSpec>,
}

#[derive(Clone, Debug)]
pub enum Layer {
    Affine(AffineLayer),
    Conv1d(Conv1dLayer),
    Conv2d(Conv2dLayer),
    Pool(PoolSpec),
}

impl Layer {
    pub fn in_len(&self) -> usize {
        match self {
            Layer::Affine(l) => l.in_dim(),
            Layer::Conv1d(c) => c.channels[0].in_len(),
            Layer::Conv2d(c) => {
                let (n, m) = c.channels[0].input_dims();
                n * m
            }
            Layer::Pool(p) => p.in_len(),
        }
    }

    pub fn out_len(&self) -> usize {
        match self {
            Layer::Affine(l) => l.out_dim(),
            Layer::Conv1d(c) => c.channels.iter().map(|s| s.out_len()).sum(),
            Layer::Conv2d(c) => c
                .channels
                .iter()
                .map(|s| {
                    let (r, q) = s.output_dims();
                    r * q
                })
                .sum(),
            Layer::Pool(p) => p.out_len(),
        }
    }

    pub fn param_specs(&self) -> Vec<ParamSpec> {
        match self {
            Layer::Affine(l) => vec![
                ParamSpec::weight(l.w.shape(), l.in_dim(), l.out_dim()),
                ParamSpec::bias(l.b.shape()),
            ],
            Layer::Conv1d(c) => {
                let e = c.channels.len();
                c.channels
                    .iter()
                    .flat_map(|s| {
                        let r = s.kernel_len();
                        [ParamSpec::weight(s.kernel.shape(), r, e * r), ParamSpec::bias(s.bias.shape())]
                    })
                    .collect()
            }
            Layer::Conv2d(c) => {
                let e = c.channels.len();
                c.channels
                    .iter()
                    .flat_map(|s| {
                        let r = s.kernel.len();
                        [ParamSpec::weight(s.kernel.shape(), r, e * r), ParamSpec::bias(s.bias.shape())]
                    })
                    .collect()
            }
            Layer::Pool(_) => Vec::new(),
        }
    }

    pub fn params(&self) -> Vec<&Tensor> {
        match self {
            Layer::Affine(l) => vec![&l.w, &l.b],
            Layer::Conv1d(c) => c.channels.iter().flat_map(|s| [&s.kernel, &s.bias]).collect(),
            Layer::Conv2d(c) => c.channels.iter().flat_map(|s| [&s.kernel, &s.bias]).collect(),
            Layer::Pool(_) => Vec::new(),
        }
    }

    pub fn set_params(&mut self, params: &[Tensor]) -> Result<()> {
        let specs = self.param_specs();
        if params.len() != specs.len() {
            return Err(Error::Config(format!("expected {} parameter tensors, got {}", specs.len(), params.len())));
        }
        for (p, s) in params.iter().zip(&specs) {
            if p.shape() != s.shape.as_slice() {
                return Err(Error::shape("set_params", &s.shape, p.shape()));
            }
        }
        match self {
            Layer::Affine(l) => {
                l.w = params[0].clone();
                l.b = params[1].clone();
            }
            Layer::Conv1d(c) => {
                for (k, spec) in c.channels.iter_mut().enumerate() {
                    *spec = spec.with_weights(params[2 * k].clone(), params[2 * k + 1].clone())?;
                }
            }
            Layer::Conv2d(c) => {
                for (k, spec) in c.channels.iter_mut().enumerate() {
                    *spec = spec.with_weights(params[2 * k].clone(), params[2 * k + 1].clone())?;
                }
            }
            Layer::Pool(_) => {}
        }
        Ok(())
    }

    /// Differentiable forward on a `batch × in_len` matrix.
    pub fn forward_var<'t>(&self, params: &[Var<'t>], x: Var<'t>) -> Result<Var<'t>> {
        match self {
            Layer::Affine(_) => x.matmul(params[0])?.add_row(params[1]),
            Layer::Conv1d(c) => {
                let outs = c
                    .channels
                    .iter()
                    .enumerate()
                    .map(|(k, s)| x.conv(params[2 * k], s.table())?.add_row(params[2 * k + 1]))
                    .collect::<Result<Vec<_>>>()?;
                stack(outs)
            }
            Layer::Conv2d(c) => {
                let outs = c
                    .channels
                    .iter()
                    .enumerate()
                    .map(|(k, s)| x.conv(params[2 * k], s.table())?.add_row(params[2 * k + 1]))
                    .collect::<Result<Vec<_>>>()?;
                stack(outs)
            }
            Layer::Pool(p) => x.pool(p.table(), p.kind),
        }
    }
}

fn stack(mut outs: Vec<Var<'_>>) -> Result<Var<'_>> {
    if outs.len() == 1 {
        return Ok(outs.pop().unwrap());
    }
    Var::concat_cols(&outs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn affine_examples() {
        let id = AffineLayer::new(Tensor::identity(2), Tensor::zeros(&[2])).unwrap();
        let x = Tensor::from_rows(&[[1.0, 2.0]]).unwrap();
        assert_eq!(affine_forward(&id, &x).unwrap(), x);

        let l = AffineLayer::new(
            Tensor::from_rows(&[[1.0, 2.0], [3.0, 4.0]]).unwrap(),
            Tensor::vector(vec![1.0, 0.0]),
        )
        .unwrap();
        let y = l.forward(&Tensor::from_rows(&[[1.0, 1.0]]).unwrap()).unwrap();
        assert_eq!(y.data(), &[5.0, 6.0]);

        let batch = Tensor::from_rows(&[[0.5, -2.0], [0.5, -2.0]]).unwrap();
        let y = l.forward(&batch).unwrap();
        assert_eq!(y.row(0), y.row(1));
    }

    #[test]
    fn affine_shape_errors() {
        assert!(AffineLayer::new(Tensor::zeros(&[2, 3]), Tensor::zeros(&[2])).is_err());
        let l = AffineLayer::zeros(3, 2);
        assert!(matches!(
            l.forward(&Tensor::zeros(&[1, 2])),
            Err(Error::ShapeMismatch { .. })
        ));
    }
}
