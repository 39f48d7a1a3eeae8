//! Weight initialization, minibatch SGD and the supervised and
//! semi-supervised training loops.

mod metrics;
mod optim;

pub use metrics::{metrics_csv, CsvMetrics, MetricRow, NoObserver, TrainObserver, METRICS_HEADER};
pub use optim::{
    epoch_batch_sizes, epochs_to_steps, init_weights, rng_from_seed, sample_minibatch, sgd_step, OptimizerConfig, StepDecay,
    TrainState,
};

use rayon::prelude::*;

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::gnn::{predict_labels, EncoderDecoder, GraphOps};
use crate::losses::{check_labels, cross_entropy_var};
use crate::nn::{Model, Parameterized};
use crate::tensor::Tensor;

/// Rows of `x` with their class labels.
#[derive(Clone, Copy, Debug)]
pub struct LabeledData<'a> {
    pub x: &'a Tensor,
    pub y: &'a [usize],
}

impl<'a> LabeledData<'a> {
    pub fn new(x: &'a Tensor, y: &'a [usize]) -> Result<Self> {
        let (n, _) = x.dims2()?;
        if n != y.len() {
            return Err(Error::CountMismatch(format!("{n} samples but {} labels", y.len())));
        }
        Ok(LabeledData { x, y })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }
}

/// Train/validation/test node index sets.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct NodeMask {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl NodeMask {
    /// Checks ranges, pairwise disjointness and a nonempty training set.
    pub fn validate(&self, n: usize) -> Result<()> {
        if self.train.is_empty() {
            return Err(Error::EmptyMask);
        }
        let mut seen = vec![false; n];
        for &v in self.train.iter().chain(&self.val).chain(&self.test) {
            if v >= n {
                return Err(Error::Config(format!("mask node {v} outside 0..{n}")));
            }
            if std::mem::replace(&mut seen[v], true) {
                return Err(Error::Config(format!("node {v} appears in more than one mask")));
            }
        }
        Ok(())
    }

    pub fn get(&self, split: &str) -> Option<&[usize]> {
        match split {
            "train" => Some(&self.train),
            "val" | "valid" | "validation" => Some(&self.val),
            "test" => Some(&self.test),
            _ => None,
        }
    }
}

/// Result of a training run.
#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub state: TrainState,
    pub history: Vec<MetricRow>,
}

impl TrainOutcome {
    /// Last logged accuracy for `split`.
    pub fn final_accuracy(&self, split: &str) -> Option<f64> {
        self.history.iter().rev().find(|r| r.split == split).map(|r| r.accuracy)
    }

    pub fn final_loss(&self, split: &str) -> Option<f64> {
        self.history.iter().rev().find(|r| r.split == split).map(|r| r.loss)
    }
}

/// Fraction of `mask` rows whose argmax score equals the label.
pub fn evaluate_accuracy(scores: &Tensor, labels: &[usize], mask: &[usize]) -> Result<f64> {
    if mask.is_empty() {
        return Err(Error::EmptyMask);
    }
    let pred = predict_labels(scores);
    let correct = mask.iter().filter(|&&v| pred[v] == labels[v]).count();
    Ok(correct as f64 / mask.len() as f64)
}

fn bind<'t>(tape: &'t Tape, weights: &[Tensor]) -> Vec<Var<'t>> {
    weights.iter().map(|w| tape.var(w.clone())).collect()
}

fn emit(observer: &mut dyn TrainObserver, history: &mut Vec<MetricRow>, row: MetricRow) -> Result<()> {
    observer.metric(&row)?;
    history.push(row);
    Ok(())
}

/// Mean cross-entropy and accuracy of a model on a labeled set, evaluated in
/// chunks.
pub fn evaluate_model(model: &Model, data: LabeledData<'_>) -> Result<(f64, f64)> {
    if data.is_empty() {
        return Err(Error::EmptyMask);
    }
    const CHUNK: usize = 2000;
    let n = data.len();
    let starts: Vec<usize> = (0..n).step_by(CHUNK).collect();
    let parts = starts
        .par_iter()
        .map(|&start| {
            let idx: Vec<usize> = (start..(start + CHUNK).min(n)).collect();
            let yb: Vec<usize> = idx.iter().map(|&i| data.y[i]).collect();
            let tape = Tape::new();
            let params: Vec<_> = model.params().into_iter().map(|p| tape.constant(p.clone())).collect();
            let scores = model.forward_var(&params, tape.constant(data.x.gather_rows(&idx)?))?;
            let loss = cross_entropy_var(scores, &yb)?.value().item() * idx.len() as f64;
            let correct = predict_labels(&scores.value()).iter().zip(&yb).filter(|(p, y)| p == y).count();
            Ok((loss, correct))
        })
        .collect::<Result<Vec<_>>>()?;
    let (loss, correct) = parts.iter().fold((0.0, 0), |(l, c), &(pl, pc)| (l + pl, c + pc));
    Ok((loss / n as f64, correct as f64 / n as f64))
}

/// Minibatch SGD on cross-entropy: initialize with `cfg.seed`, then for each
/// epoch run `⌈N/|B|⌉` steps of score → loss → update.
///
/// The per-epoch `train` row reports the mean of the minibatch losses and the
/// accuracy over the samples drawn that epoch. Each entry of `evals` adds a
/// row evaluated on the full set.
pub fn train_supervised(
    model: &mut Model,
    train: LabeledData<'_>,
    evals: &[(&str, LabeledData<'_>)],
    cfg: &OptimizerConfig,
    observer: &mut dyn TrainObserver,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    check_labels(train.y, model.out_len())?;
    let n = train.len();
    if cfg.batch_size > n {
        return Err(Error::BatchTooLarge { batch: cfg.batch_size, n });
    }
    init_weights(model, cfg.seed)?;
    let mut state = TrainState::from_model(model, cfg.seed.wrapping_add(1));
    let mut history = Vec::new();
    for epoch in 0..cfg.epochs {
        let lr = cfg.lr_at(epoch);
        let (mut loss_sum, mut correct, mut seen) = (0.0, 0usize, 0usize);
        let sizes = epoch_batch_sizes(n, cfg.batch_size);
        for &b in &sizes {
            let idx = sample_minibatch(&mut state.rng, n, b)?;
            let yb: Vec<usize> = idx.iter().map(|&i| train.y[i]).collect();
            let tape = Tape::new();
            let params = bind(&tape, &state.weights);
            let scores = model.forward_var(&params, tape.constant(train.x.gather_rows(&idx)?))?;
            let loss = cross_entropy_var(scores, &yb)?;
            let lv = loss.value().item();
            if !lv.is_finite() {
                return Err(Error::NonFiniteLoss(state.step));
            }
            tape.backward(loss)?;
            let grads: Vec<Tensor> = params.iter().map(Var::grad).collect();
            correct += predict_labels(&scores.value()).iter().zip(&yb).filter(|(p, y)| p == y).count();
            seen += b;
            loss_sum += lv;
            sgd_step(&mut state, &grads, lr)?;
        }
        state.running_loss = loss_sum / sizes.len() as f64;
        model.set_params(&state.weights)?;
        if cfg.should_log(epoch) {
            let row = MetricRow {
                epoch: epoch + 1,
                step: state.step,
                split: "train".into(),
                loss: state.running_loss,
                accuracy: correct as f64 / seen as f64,
            };
            emit(observer, &mut history, row)?;
            for (name, data) in evals {
                let (loss, accuracy) = evaluate_model(model, *data)?;
                let row = MetricRow {
                    epoch: epoch + 1,
                    step: state.step,
                    split: name.to_string(),
                    loss,
                    accuracy,
                };
                emit(observer, &mut history, row)?;
            }
        }
        observer.epoch_end(epoch + 1, &state.weights)?;
    }
    Ok(TrainOutcome { state, history })
}

/// Cross-entropy over `mask` rows of `|V| × C` scores.
pub fn masked_cross_entropy<'t>(scores: Var<'t>, labels: &[usize], mask: &[usize]) -> Result<Var<'t>> {
    if mask.is_empty() {
        return Err(Error::EmptyMask);
    }
    let y: Vec<usize> = mask.iter().map(|&v| labels[v]).collect();
    cross_entropy_var(scores.gather_rows(mask)?, &y)
}

/// Full-graph gradient descent with the loss restricted to the training mask.
///
/// Every epoch is one update computed from a forward pass over the whole
/// graph, so all node features are visible while only training labels enter
/// the loss. Metrics rows are written for each nonempty mask.
pub fn train_node_classifier(
    model: &mut EncoderDecoder,
    ops: &GraphOps,
    h0: &Tensor,
    labels: &[usize],
    mask: &NodeMask,
    cfg: &OptimizerConfig,
    observer: &mut dyn TrainObserver,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let n = ops.graph().n_nodes();
    mask.validate(n)?;
    if labels.len() != n {
        return Err(Error::CountMismatch(format!("{n} nodes but {} labels", labels.len())));
    }
    check_labels(labels, model.classes())?;
    init_weights(model, cfg.seed)?;
    let mut state = TrainState::from_model(model, cfg.seed.wrapping_add(1));
    let mut history = Vec::new();
    for epoch in 0..cfg.epochs {
        let tape = Tape::new();
        let params = bind(&tape, &state.weights);
        let scores = model.forward_var(&params, ops, tape.constant(h0.clone()))?;
        let loss = masked_cross_entropy(scores, labels, &mask.train)?;
        let lv = loss.value().item();
        if !lv.is_finite() {
            return Err(Error::NonFiniteLoss(state.step));
        }
        tape.backward(loss)?;
        let grads: Vec<Tensor> = params.iter().map(Var::grad).collect();
        let s = scores.value();
        let before = state.step;
        sgd_step(&mut state, &grads, cfg.lr_at(epoch))?;
        state.running_loss = lv;
        if cfg.should_log(epoch) {
            for (split, idx) in [("train", &mask.train), ("val", &mask.val), ("test", &mask.test)] {
                if idx.is_empty() {
                    continue;
                }
                let l = if split == "train" {
                    lv
                } else {
                    let t2 = Tape::new();
                    masked_cross_entropy(t2.constant(s.as_ref().clone()), labels, idx)?.value().item()
                };
                let row = MetricRow {
                    epoch: epoch + 1,
                    step: before,
                    split: split.into(),
                    loss: l,
                    accuracy: evaluate_accuracy(&s, labels, idx)?,
                };
                emit(observer, &mut history, row)?;
            }
        }
        observer.epoch_end(epoch + 1, &state.weights)?;
    }
    model.set_params(&state.weights)?;
    Ok(TrainOutcome { state, history })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Activation;

    #[test]
    fn accuracy_examples() {
        let s = Tensor::from_rows(&[[1.0, 0.0], [0.0, 1.0], [1.0, 0.0], [0.0, 1.0]]).unwrap();
        assert_eq!(evaluate_accuracy(&s, &[0, 1, 0, 1], &[0, 1, 2, 3]).unwrap(), 1.0);
        assert_eq!(evaluate_accuracy(&s, &[1, 0, 1, 0], &[0, 1, 2, 3]).unwrap(), 0.0);
        assert_eq!(evaluate_accuracy(&s, &[0, 1, 1, 0], &[0, 1, 2, 3]).unwrap(), 0.5);
        assert!(matches!(evaluate_accuracy(&s, &[0; 4], &[]), Err(Error::EmptyMask)));
    }

    #[test]
    fn single_sample_overfits() {
        let x = Tensor::from_rows(&[[0.5, -1.0, 2.0]]).unwrap();
        let y = [1usize];
        let mut model = Model::mlp(&[3, 4, 3], Activation::Tanh).unwrap();
        let cfg = OptimizerConfig {
            learning_rate: 0.05,
            batch_size: 1,
            epochs: 10,
            seed: 4,
            ..Default::default()
        };
        let mut rows = Vec::new();
        let out = train_supervised(&mut model, LabeledData::new(&x, &y).unwrap(), &[], &cfg, &mut rows).unwrap();
        let losses: Vec<f64> = out.history.iter().map(|r| r.loss).collect();
        assert_eq!(losses.len(), 10);
        assert!(losses.windows(2).all(|w| w[1] < w[0]), "{losses:?}");
        assert_eq!(out.state.step, 10);
    }

    #[test]
    fn mask_validation() {
        let m = NodeMask {
            train: vec![0, 1],
            val: vec![1],
            test: vec![],
        };
        assert!(m.validate(3).is_err());
        assert!(matches!(NodeMask::default().validate(3), Err(Error::EmptyMask)));
    }
}
