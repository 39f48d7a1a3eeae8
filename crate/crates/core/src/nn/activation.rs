use std::fmt;
use std::str::FromStr;

use crate::autodiff::Var;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Default LeakyRELU slope for attention logits.
pub const DEFAULT_LEAKY_SLOPE: f64 = 0.2;

/// ELU scale for negative inputs.
pub const ELU_ALPHA: f64 = 1.0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Activation {
    Identity,
    Relu,
    /// `z` for `z > 0`, `slope · z` otherwise; slope in (0, 1).
    LeakyRelu(f64),
    /// `z` for `z > 0`, `exp(z) − 1` otherwise.
    Elu,
    Tanh,
}

impl Activation {
    pub fn leaky() -> Self {
        Activation::LeakyRelu(DEFAULT_LEAKY_SLOPE)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Activation::LeakyRelu(s) if !(*s > 0.0 && *s < 1.0) => {
                Err(Error::Config(format!("LeakyRELU slope {s} outside (0, 1)")))
            }
            _ => Ok(()),
        }
    }

    pub fn apply_scalar(&self, z: f64) -> f64 {
        match *self {
            Activation::Identity => z,
            Activation::Relu => z.max(0.0),
            Activation::LeakyRelu(s) => {
                if z > 0.0 {
                    z
                } else {
                    s * z
                }
            }
            Activation::Elu => {
                if z > 0.0 {
                    z
                } else {
                    ELU_ALPHA * z.exp_m1()
                }
            }
            Activation::Tanh => z.tanh(),
        }
    }

    pub fn apply_var<'t>(&self, z: Var<'t>) -> Var<'t> {
        match *self {
            Activation::Identity => z,
            Activation::Relu => z.relu(),
            Activation::LeakyRelu(s) => z.leaky_relu(s),
            Activation::Elu => z.elu(ELU_ALPHA),
            Activation::Tanh => z.tanh(),
        }
    }

    /// Checkpoint code stored in the high nibble of the layer-kind byte.
    pub(crate) fn code(&self) -> u8 {
        match self {
            Activation::Identity => 0,
            Activation::Relu => 1,
            Activation::LeakyRelu(_) => 2,
            Activation::Elu => 3,
            Activation::Tanh => 4,
        }
    }

    pub(crate) fn from_code(code: u8) -> Result<Self> {
        Ok(match code {
            0 => Activation::Identity,
            1 => Activation::Relu,
            2 => Activation::leaky(),
            3 => Activation::Elu,
            4 => Activation::Tanh,
            c => return Err(Error::BadCheckpoint(format!("unknown activation code {c}"))),
        })
    }
}

/// Elementwise application of an activation to a tensor.
pub fn activate(kind: Activation, z: &Tensor) -> Tensor {
    z.map(|v| kind.apply_scalar(v))
}

/// `RELU(x − a) − 2·RELU(x) + RELU(x + a)`: a bounded bump supported on `[−|a|, |a|]`.
pub fn spike_function(a: f64, x: f64) -> Result<f64> {
    if a == 0.0 {
        return Err(Error::ZeroParameter);
    }
    let relu = |z: f64| z.max(0.0);
    Ok(relu(x - a) - 2.0 * relu(x) + relu(x + a))
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Activation::Identity => write!(f, "identity"),
            Activation::Relu => write!(f, "relu"),
            Activation::LeakyRelu(s) => write!(f, "leaky_relu:{s}"),
            Activation::Elu => write!(f, "elu"),
            Activation::Tanh => write!(f, "tanh"),
        }
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let act = match s.to_ascii_lowercase().as_str() {
            "identity" | "id" | "none" | "linear" => Activation::Identity,
            "relu" => Activation::Relu,
            "leaky_relu" | "leakyrelu" | "leaky" => Activation::leaky(),
            "elu" => Activation::Elu,
            "tanh" => Activation::Tanh,
            other => match other.strip_prefix("leaky_relu:") {
                Some(v) => Activation::LeakyRelu(
                    v.parse()
                        .map_err(|_| Error::Config(format!("bad LeakyRELU slope '{v}'")))?,
                ),
                None => return Err(Error::Config(format!("unknown activation '{s}'"))),
            },
        };
        act.validate()?;
        Ok(act)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn activation_examples() {
        let z = Tensor::vector(vec![-1.0, 0.0, 2.0]);
        assert_eq!(activate(Activation::Relu, &z).data(), &[0.0, 0.0, 2.0]);
        let z = Tensor::vector(vec![-1.0, 2.0]);
        assert_eq!(activate(Activation::LeakyRelu(0.2), &z).data(), &[-0.2, 2.0]);
        assert_eq!(activate(Activation::Tanh, &Tensor::vector(vec![0.0])).data(), &[0.0]);
        let elu = activate(Activation::Elu, &Tensor::vector(vec![-1.0, 3.0]));
        assert!((elu.data()[0] - ((-1.0f64).exp() - 1.0)).abs() < 1e-15);
        assert_eq!(elu.data()[1], 3.0);
    }

    #[test]
    fn relu_idempotent() {
        let z = Tensor::vector(vec![-3.0, -0.1, 0.0, 0.7, 5.0]);
        let once = activate(Activation::Relu, &z);
        assert_eq!(activate(Activation::Relu, &once), once);
    }

    #[test]
    fn spike_examples() {
        assert_eq!(spike_function(1.0, 0.0).unwrap(), 1.0);
        assert_eq!(spike_function(1.0, 2.0).unwrap(), 0.0);
        assert_eq!(spike_function(1.0, -2.0).unwrap(), 0.0);
        assert!(matches!(spike_function(0.0, 1.0), Err(Error::ZeroParameter)));
    }

    #[test]
    fn spike_support_and_bound() {
        for &a in &[-2.5f64, -1.0, 0.3, 1.0, 4.0] {
            let span = a.abs();
            for k in 0..=6000 {
                let x = -3.0 * span + 6.0 * span * k as f64 / 6000.0;
                let r = spike_function(a, x).unwrap();
                // The bump peaks at |a| when x = 0.
                assert!(r.abs() <= span.max(1.0) + 1e-12);
                if x.abs() >= span {
                    assert!(r.abs() < 1e-12, "a={a} x={x} r={r}");
                }
            }
        }
    }

    #[test]
    fn leaky_slope_validated() {
        assert!("leaky_relu:1.5".parse::<Activation>().is_err());
        assert_eq!("leaky_relu:0.1".parse::<Activation>().unwrap(), Activation::LeakyRelu(0.1));
        assert_eq!("tanh".parse::<Activation>().unwrap(), Activation::Tanh);
    }
}
