use rand::distr::{Distribution, Uniform};
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::nn::{ParamRole, Parameterized};
use crate::tensor::Tensor;

/// Multiply the learning rate by `factor` every `every` epochs.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepDecay {
    pub factor: f64,
    pub every: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub lr_schedule: Option<StepDecay>,
    /// Write metrics every this many epochs (the last epoch is always logged).
    pub log_every: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            learning_rate: 0.01,
            batch_size: 32,
            epochs: 10,
            seed: 0,
            lr_schedule: None,
            log_every: 1,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning rate must be > 0, got {}", self.learning_rate)));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be >= 1".into()));
        }
        if let Some(s) = self.lr_schedule {
            if s.every == 0 || !(s.factor > 0.0) {
                return Err(Error::Config("lr schedule needs factor > 0 and every >= 1".into()));
            }
        }
        if self.log_every == 0 {
            return Err(Error::Config("log_every must be >= 1".into()));
        }
        Ok(())
    }

    /// Learning rate in effect during zero-based `epoch`.
    pub fn lr_at(&self, epoch: usize) -> f64 {
        match self.lr_schedule {
            Some(s) => self.learning_rate * s.factor.powi((epoch / s.every) as i32),
            None => self.learning_rate,
        }
    }

    pub(crate) fn should_log(&self, epoch: usize) -> bool {
        (epoch + 1).is_multiple_of(self.log_every) || epoch + 1 == self.epochs
    }
}

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Xavier-uniform weights on `±√(6 / (fan_in + fan_out))`, zero biases.
pub fn init_weights<M: Parameterized + ?Sized>(model: &mut M, seed: u64) -> Result<()> {
    let mut rng = rng_from_seed(seed);
    let tensors = model
        .param_specs()
        .iter()
        .map(|s| match s.role {
            ParamRole::Bias => Ok(Tensor::zeros(&s.shape)),
            ParamRole::Weight { fan_in, fan_out } => {
                let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let dist = Uniform::new_inclusive(-bound, bound).map_err(|e| Error::Config(e.to_string()))?;
                Tensor::new(s.shape.clone(), (0..s.len()).map(|_| dist.sample(&mut rng)).collect())
            }
        })
        .collect::<Result<Vec<_>>>()?;
    model.set_params(&tensors)
}

/// Weights `w_t` as a list of parameter tensors plus the step counter.
#[derive(Clone, Debug)]
pub struct TrainState {
    pub step: usize,
    pub weights: Vec<Tensor>,
    pub running_loss: f64,
    pub rng: ChaCha8Rng,
}

impl TrainState {
    pub fn new(weights: Vec<Tensor>, seed: u64) -> Self {
        TrainState {
            step: 0,
            weights,
            running_loss: 0.0,
            rng: rng_from_seed(seed),
        }
    }

    pub fn from_model<M: Parameterized + ?Sized>(model: &M, seed: u64) -> Self {
        Self::new(model.params().into_iter().cloned().collect(), seed)
    }

    pub fn weights_flat(&self) -> Tensor {
        Tensor::vector(self.weights.iter().flat_map(|t| t.data().iter().copied()).collect())
    }
}

/// `w ← w − η · grad`, then `t ← t + 1`.
pub fn sgd_step(state: &mut TrainState, grads: &[Tensor], lr: f64) -> Result<()> {
    if grads.len() != state.weights.len() {
        return Err(Error::shape("sgd_step", &[state.weights.len()], &[grads.len()]));
    }
    for (i, (w, g)) in state.weights.iter().zip(grads).enumerate() {
        if w.shape() != g.shape() {
            return Err(Error::shape("sgd_step", w.shape(), g.shape()));
        }
        if !g.all_finite() {
            return Err(Error::NonFiniteGradient { step: state.step, param: i });
        }
    }
    for (w, g) in state.weights.iter_mut().zip(grads) {
        w.axpy(-lr, g)?;
    }
    state.step += 1;
    Ok(())
}

/// `B` distinct indices from `0..n`, uniformly at random.
pub fn sample_minibatch<R: rand::Rng + ?Sized>(rng: &mut R, n: usize, batch: usize) -> Result<Vec<usize>> {
    if batch > n {
        return Err(Error::BatchTooLarge { batch, n });
    }
    Ok(index::sample(rng, n, batch).into_vec())
}

/// Steps per epoch, `⌈N / |B|⌉`.
pub fn epochs_to_steps(n: usize, batch: usize) -> usize {
    n.div_ceil(batch.max(1))
}

/// Batch sizes used in one epoch: full batches, then a short final one.
pub fn epoch_batch_sizes(n: usize, batch: usize) -> Vec<usize> {
    let steps = epochs_to_steps(n, batch);
    (0..steps).map(|s| if s + 1 == steps { n - s * batch } else { batch }).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Activation, Model};

    #[test]
    fn init_is_seeded_with_zero_bias() {
        let mut a = Model::mlp(&[5, 4, 3], Activation::Relu).unwrap();
        let mut b = a.clone();
        init_weights(&mut a, 9).unwrap();
        init_weights(&mut b, 9).unwrap();
        assert_eq!(a.weights_flat(), b.weights_flat());
        init_weights(&mut b, 10).unwrap();
        assert_ne!(a.weights_flat(), b.weights_flat());
        let bound = (6.0f64 / 9.0).sqrt();
        assert!(a.params()[0].data().iter().all(|v| v.abs() <= bound));
        assert!(a.params()[1].data().iter().all(|&v| v == 0.0));
        assert!(a.params()[3].data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn sgd_examples() {
        let mut s = TrainState::new(vec![Tensor::vector(vec![1.0])], 0);
        sgd_step(&mut s, &[Tensor::vector(vec![0.0])], 0.1).unwrap();
        assert_eq!(s.weights[0].data(), &[1.0]);
        sgd_step(&mut s, &[Tensor::vector(vec![2.0])], 0.1).unwrap();
        assert!((s.weights[0].data()[0] - 0.8).abs() < 1e-15);
        assert_eq!(s.step, 2);
        let err = sgd_step(&mut s, &[Tensor::vector(vec![f64::NAN])], 0.1);
        assert!(matches!(err, Err(Error::NonFiniteGradient { step: 2, param: 0 })));
    }

    #[test]
    fn quadratic_converges() {
        let mut s = TrainState::new(vec![Tensor::vector(vec![1.0])], 0);
        for _ in 0..100 {
            let g = s.weights[0].scale(2.0);
            sgd_step(&mut s, &[g], 0.1).unwrap();
        }
        assert!(s.weights[0].data()[0].abs() < 1e-4);
    }

    #[test]
    fn minibatches() {
        let mut rng = rng_from_seed(3);
        let mut all = sample_minibatch(&mut rng, 10, 10).unwrap();
        all.sort();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
        let a = sample_minibatch(&mut rng_from_seed(5), 100, 7).unwrap();
        assert_eq!(a, sample_minibatch(&mut rng_from_seed(5), 100, 7).unwrap());
        assert!(a.iter().all(|&i| i < 100));
        assert!(matches!(sample_minibatch(&mut rng, 3, 4), Err(Error::BatchTooLarge { .. })));
    }

    #[test]
    fn epoch_accounting() {
        assert_eq!(epochs_to_steps(60000, 32), 1875);
        assert_eq!(epochs_to_steps(10, 10), 1);
        assert_eq!(epochs_to_steps(10, 3), 4);
        assert_eq!(epoch_batch_sizes(10, 3), vec![3, 3, 3, 1]);
    }

    #[test]
    fn step_decay() {
        let cfg = OptimizerConfig {
            learning_rate: 1.0,
            lr_schedule: Some(StepDecay { factor: 0.5, every: 2 }),
            ..Default::default()
        };
        assert_eq!(cfg.lr_at(0), 1.0);
        assert_eq!(cfg.lr_at(1), 1.0);
        assert_eq!(cfg.lr_at(2), 0.5);
        assert_eq!(cfg.lr_at(5), 0.25);
    }
}
