//! Softmax heads and loss functions.
//!
//! Entropies follow the convention `H(q) = Σ q_i log q_i` (non-positive) and
//! `H(q, p) = −Σ q_i log p_i`, so that `KL(q‖p) = H(q) + H(q, p)` holds as
//! written. The usual non-negative entropy is `−shannon_entropy(q)`.

use std::fmt;
use std::str::FromStr;

use crate::autodiff::Var;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// A probability vector over classes `0..C`.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassDistribution {
    probs: Vec<f64>,
}

impl ClassDistribution {
    /// Validates non-negativity and normalization within `1e-9`.
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() || probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::DomainError {
                op: "distribution",
                msg: "entries must be finite and non-negative".into(),
            });
        }
        let s: f64 = probs.iter().sum();
        if (s - 1.0).abs() > 1e-9 {
            return Err(Error::DomainError {
                op: "distribution",
                msg: format!("entries sum to {s}"),
            });
        }
        Ok(ClassDistribution { probs })
    }

    /// The mass distribution at `label`.
    pub fn mass(classes: usize, label: usize) -> Result<Self> {
        if label >= classes {
            return Err(Error::LabelOutOfRange { label, classes });
        }
        let mut probs = vec![0.0; classes];
        probs[label] = 1.0;
        Ok(ClassDistribution { probs })
    }

    pub fn uniform(classes: usize) -> Self {
        ClassDistribution {
            probs: vec![1.0 / classes as f64; classes],
        }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn classes(&self) -> usize {
        self.probs.len()
    }
}

/// Class scores for `N` samples with their labels.
#[derive(Clone, Debug)]
pub struct LabeledBatch {
    pub scores: Tensor,
    pub labels: Vec<usize>,
}

impl LabeledBatch {
    pub fn new(scores: Tensor, labels: Vec<usize>) -> Result<Self> {
        let (n, c) = scores.dims2()?;
        if labels.len() != n {
            return Err(Error::shape("labeled batch", &[n], &[labels.len()]));
        }
        check_labels(&labels, c)?;
        Ok(LabeledBatch { scores, labels })
    }
}

pub(crate) fn check_labels(labels: &[usize], classes: usize) -> Result<()> {
    match labels.iter().find(|&&y| y >= classes) {
        Some(&label) => Err(Error::LabelOutOfRange { label, classes }),
        None => Ok(()),
    }
}

/// `S(z)_i = e^{z_i} / Σ_j e^{z_j}`, evaluated after subtracting `max z`.
pub fn softmax(z: &[f64]) -> Result<ClassDistribution> {
    if z.is_empty() || z.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("softmax input"));
    }
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    Ok(ClassDistribution {
        probs: e.into_iter().map(|v| v / s).collect(),
    })
}

/// `log S(z)_i` computed as `z_i − logsumexp(z)`.
pub fn log_softmax(z: &[f64]) -> Result<Vec<f64>> {
    if z.is_empty() || z.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("softmax input"));
    }
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
    Ok(z.iter().map(|v| v - lse).collect())
}

/// Mean over the batch of `−log softmax(s)_y`.
pub fn cross_entropy_loss(batch: &LabeledBatch) -> Result<f64> {
    let (n, c) = batch.scores.dims2()?;
    check_labels(&batch.labels, c)?;
    let mut total = 0.0;
    for (i, &y) in batch.labels.iter().enumerate() {
        total -= log_softmax(batch.scores.row(i))?[y];
    }
    Ok(total / n as f64)
}

/// `Σ q_i log q_i` with `0 log 0 = 0`; never positive.
pub fn shannon_entropy(q: &ClassDistribution) -> f64 {
    q.probs.iter().filter(|&&v| v > 0.0).map(|&v| v * v.ln()).sum()
}

/// `H(q, p) = −Σ q_i log p_i`.
pub fn cross_entropy(q: &ClassDistribution, p: &ClassDistribution) -> Result<f64> {
    same_support(q, p)?;
    Ok(-q
        .probs
        .iter()
        .zip(&p.probs)
        .filter(|(&qi, _)| qi > 0.0)
        .map(|(&qi, &pi)| qi * pi.ln())
        .sum::<f64>())
}

/// `KL(q‖p) = Σ q_i log(q_i / p_i)`.
pub fn kl_divergence(q: &ClassDistribution, p: &ClassDistribution) -> Result<f64> {
    same_support(q, p)?;
    Ok(q.probs
        .iter()
        .zip(&p.probs)
        .filter(|(&qi, _)| qi > 0.0)
        .map(|(&qi, &pi)| qi * (qi / pi).ln())
        .sum())
}

fn same_support(q: &ClassDistribution, p: &ClassDistribution) -> Result<()> {
    if q.classes() != p.classes() {
        return Err(Error::shape("distributions", &[q.classes()], &[p.classes()]));
    }
    match q.probs.iter().zip(&p.probs).position(|(&qi, &pi)| qi > 0.0 && pi == 0.0) {
        Some(i) => Err(Error::SupportMismatch(i)),
        None => Ok(()),
    }
}

/// Huber threshold used when none is given.
pub const DEFAULT_HUBER_DELTA: f64 = 1.0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum RegressionLoss {
    Mse,
    Rmse,
    Mae,
    /// `½r²` for `|r| ≤ δ`, `δ(|r| − δ/2)` otherwise.
    Huber(f64),
    LogCosh,
}

impl RegressionLoss {
    /// Per-coordinate penalty; MSE/RMSE use `r²`, MAE `|r|`.
    fn pointwise(&self, r: f64) -> f64 {
        match *self {
            RegressionLoss::Mse | RegressionLoss::Rmse => r * r,
            RegressionLoss::Mae => r.abs(),
            RegressionLoss::Huber(d) => {
                if r.abs() <= d {
                    0.5 * r * r
                } else {
                    d * (r.abs() - 0.5 * d)
                }
            }
            RegressionLoss::LogCosh => log_cosh(r),
        }
    }
}

/// `log cosh r` without overflow for large `|r|`.
pub fn log_cosh(r: f64) -> f64 {
    let a = r.abs();
    a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2
}

impl fmt::Display for RegressionLoss {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RegressionLoss::Mse => write!(f, "mse"),
            RegressionLoss::Rmse => write!(f, "rmse"),
            RegressionLoss::Mae => write!(f, "mae"),
            RegressionLoss::Huber(d) => write!(f, "huber:{d}"),
            RegressionLoss::LogCosh => write!(f, "logcosh"),
        }
    }
}

impl FromStr for RegressionLoss {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.to_ascii_lowercase().as_str() {
            "mse" => RegressionLoss::Mse,
            "rmse" => RegressionLoss::Rmse,
            "mae" => RegressionLoss::Mae,
            "huber" => RegressionLoss::Huber(DEFAULT_HUBER_DELTA),
            "logcosh" | "log_cosh" => RegressionLoss::LogCosh,
            other => match other.strip_prefix("huber:").map(str::parse::<f64>) {
                Some(Ok(d)) if d > 0.0 => RegressionLoss::Huber(d),
                _ => return Err(Error::Config(format!("unknown regression loss '{s}'"))),
            },
        })
    }
}

/// MSE and MAE sum the norm over the `c` output coordinates and average over
/// the `N` rows; Huber and log-cosh average over every coordinate.
pub fn regression_loss(kind: RegressionLoss, pred: &Tensor, target: &Tensor) -> Result<f64> {
    if pred.shape() != target.shape() {
        return Err(Error::shape("regression_loss", pred.shape(), target.shape()));
    }
    let n = if pred.ndim() >= 2 { pred.shape()[0] } else { 1 };
    let total: f64 = pred.data().iter().zip(target.data()).map(|(p, t)| kind.pointwise(p - t)).sum();
    Ok(match kind {
        RegressionLoss::Mse | RegressionLoss::Mae => total / n as f64,
        RegressionLoss::Rmse => (total / n as f64).sqrt(),
        RegressionLoss::Huber(_) | RegressionLoss::LogCosh => total / pred.len() as f64,
    })
}

/// Differentiable mean cross-entropy of `N × C` scores.
pub fn cross_entropy_var<'t>(scores: Var<'t>, labels: &[usize]) -> Result<Var<'t>> {
    let shape = scores.shape();
    if shape.len() != 2 || shape[0] != labels.len() {
        return Err(Error::shape("cross_entropy", &shape, &[labels.len()]));
    }
    check_labels(labels, shape[1])?;
    Ok(scores.log_softmax_rows()?.pick_cols(labels)?.mean().neg())
}

/// Differentiable counterpart of [`regression_loss`].
pub fn regression_loss_var<'t>(kind: RegressionLoss, pred: Var<'t>, target: Var<'t>) -> Result<Var<'t>> {
    let shape = pred.shape();
    let n = if shape.len() >= 2 { shape[0] } else { 1 } as f64;
    let r = pred.sub(target)?;
    Ok(match kind {
        RegressionLoss::Mse => r.mul(r)?.sum().scale(1.0 / n),
        RegressionLoss::Rmse => r.mul(r)?.sum().scale(1.0 / n).sqrt()?,
        RegressionLoss::Mae => r.abs().sum().scale(1.0 / n),
        RegressionLoss::Huber(d) => r.huber(d).mean(),
        RegressionLoss::LogCosh => r.log_cosh().mean(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::LN_2;

    #[test]
    fn softmax_examples() {
        assert_eq!(softmax(&[0.0, 0.0]).unwrap().probs(), &[0.5, 0.5]);
        let p = softmax(&[1f64.ln(), 3f64.ln()]).unwrap();
        assert_abs_diff_eq!(p.probs()[0], 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(p.probs()[1], 0.75, epsilon = 1e-15);
        let a = softmax(&[0.3, -1.2, 4.0]).unwrap();
        let b = softmax(&[100.3, 98.8, 104.0]).unwrap();
        for (x, y) in a.probs().iter().zip(b.probs()) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-12);
        }
        let big = softmax(&[1e4, -1e4, 0.0]).unwrap();
        assert!(ClassDistribution::new(big.probs().to_vec()).is_ok());
        assert!(matches!(softmax(&[f64::NAN, 0.0]), Err(Error::NonFinite(_))));
    }

    #[test]
    fn cross_entropy_examples() {
        let b = LabeledBatch::new(Tensor::from_rows(&[[0.0, 0.0]]).unwrap(), vec![0]).unwrap();
        assert_abs_diff_eq!(cross_entropy_loss(&b).unwrap(), LN_2, epsilon = 1e-15);
        let b = LabeledBatch::new(Tensor::from_rows(&[[800.0, 0.0]]).unwrap(), vec![0]).unwrap();
        assert!(cross_entropy_loss(&b).unwrap() < 1e-300);
        let one = LabeledBatch::new(Tensor::from_rows(&[[0.2, 1.5, -0.3]]).unwrap(), vec![2]).unwrap();
        let two = LabeledBatch::new(Tensor::from_rows(&[[0.2, 1.5, -0.3], [0.2, 1.5, -0.3]]).unwrap(), vec![2, 2]).unwrap();
        assert_abs_diff_eq!(cross_entropy_loss(&one).unwrap(), cross_entropy_loss(&two).unwrap(), epsilon = 1e-15);
        assert!(matches!(
            LabeledBatch::new(Tensor::zeros(&[1, 2]), vec![2]),
            Err(Error::LabelOutOfRange { label: 2, classes: 2 })
        ));
    }

    #[test]
    fn entropy_examples() {
        assert_eq!(shannon_entropy(&ClassDistribution::mass(3, 1).unwrap()), 0.0);
        assert_abs_diff_eq!(shannon_entropy(&ClassDistribution::uniform(2)), -LN_2, epsilon = 1e-15);
        assert_abs_diff_eq!(shannon_entropy(&ClassDistribution::uniform(4)), -(4f64.ln()), epsilon = 1e-15);
    }

    #[test]
    fn kl_examples() {
        let q = ClassDistribution::new(vec![0.5, 0.5]).unwrap();
        let p = ClassDistribution::new(vec![0.25, 0.75]).unwrap();
        assert_eq!(kl_divergence(&q, &q).unwrap(), 0.0);
        let expected = 0.5 * 2f64.ln() + 0.5 * (2.0f64 / 3.0).ln();
        assert_abs_diff_eq!(kl_divergence(&q, &p).unwrap(), expected, epsilon = 1e-15);
        assert_abs_diff_eq!(kl_divergence(&q, &p).unwrap(), 0.1438410362258904, epsilon = 1e-12);
        let mass = ClassDistribution::mass(2, 1).unwrap();
        assert_abs_diff_eq!(kl_divergence(&mass, &p).unwrap(), -(0.75f64.ln()), epsilon = 1e-15);
        let zero = ClassDistribution::mass(2, 0).unwrap();
        assert!(matches!(kl_divergence(&q, &zero), Err(Error::SupportMismatch(1))));
    }

    #[test]
    fn regression_examples() {
        let p = Tensor::from_rows(&[[3.0]]).unwrap();
        let t = Tensor::from_rows(&[[1.0]]).unwrap();
        assert_eq!(regression_loss(RegressionLoss::Mse, &p, &t).unwrap(), 4.0);
        assert_eq!(regression_loss(RegressionLoss::Rmse, &p, &t).unwrap(), 2.0);
        assert_eq!(regression_loss(RegressionLoss::Mae, &p, &t).unwrap(), 2.0);
        assert_eq!(regression_loss(RegressionLoss::Huber(1.0), &p, &t).unwrap(), 1.5);
        for kind in [
            RegressionLoss::Mse,
            RegressionLoss::Rmse,
            RegressionLoss::Mae,
            RegressionLoss::Huber(1.0),
            RegressionLoss::LogCosh,
        ] {
            assert_eq!(regression_loss(kind, &p, &p).unwrap(), 0.0);
        }
        assert!(regression_loss(RegressionLoss::Mse, &p, &Tensor::zeros(&[1, 2])).is_err());
        assert_abs_diff_eq!(log_cosh(3.0), 3f64.cosh().ln(), epsilon = 1e-14);
        assert!(log_cosh(1e4).is_finite());
    }
}
