//! Optimizer and training loop invariants.

mod support;

use gdl::datasets::karate_club;
use gdl::gnn::{EncoderDecoder, GraphOps};
use gdl::graph::symmetric_eigenvalues;
use gdl::losses::cross_entropy_var;
use gdl::nn::{Activation, Model, Parameterized};
use gdl::training::{
    epochs_to_steps, init_weights, masked_cross_entropy, train_node_classifier, train_supervised, LabeledData, NoObserver,
    NodeMask, OptimizerConfig, StepDecay, TrainState,
};
use gdl::{Tape, Tensor, Var};
use proptest::prelude::*;
use support::{normal, Gen};

fn blobs(gen: &Gen, n: usize, d: usize, classes: usize) -> (Tensor, Vec<usize>) {
    let y: Vec<usize> = (0..n).map(|i| i % classes).collect();
    let mut x = normal(gen, &[n, d]);
    for (i, &c) in y.iter().enumerate() {
        x.row_mut(i)[c % d] += 3.0;
    }
    (x, y)
}

fn quadratic<'t>(w: Var<'t>, a: &Tensor, b: &Tensor) -> gdl::Result<Var<'t>> {
    let t = w.tape();
    let aw = t.constant(a.clone()).matmul(w)?;
    w.mul(aw)?.sum().scale(0.5).sub(w.mul(t.constant(b.clone()))?.sum())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn gradient_descent_on_a_convex_quadratic_is_monotone(seed in any::<u64>()) {
        let gen = Gen::new(seed);
        let n = gen.range(1..=6);
        let m = normal(&gen, &[n, n]);
        let a = m.t_matmul(&m).unwrap();
        let b = normal(&gen, &[n, 1]);
        let lambda_max = symmetric_eigenvalues(&a).unwrap().last().copied().unwrap().max(1e-3);
        let mut state = TrainState::new(vec![normal(&gen, &[n, 1])], 0);
        let mut prev = f64::INFINITY;
        for _ in 0..50 {
            let tape = Tape::new();
            let w = tape.var(state.weights[0].clone());
            let f = quadratic(w, &a, &b).unwrap();
            let fv = f.value().item();
            prop_assert!(fv <= prev + 1e-12, "{fv} > {prev}");
            prev = fv;
            tape.backward(f).unwrap();
            gdl::training::sgd_step(&mut state, &[w.grad()], 1.0 / lambda_max).unwrap();
        }
        prop_assert_eq!(state.step, 50);
    }
}

#[test]
fn full_batch_sgd_is_gradient_descent() {
    let gen = Gen::new(3);
    let (x, y) = blobs(&gen, 24, 4, 3);
    let cfg = OptimizerConfig {
        learning_rate: 0.2,
        batch_size: 24,
        epochs: 15,
        seed: 9,
        ..Default::default()
    };
    let mut model = Model::mlp(&[4, 5, 3], Activation::Tanh).unwrap();
    let out = train_supervised(&mut model, LabeledData::new(&x, &y).unwrap(), &[], &cfg, &mut NoObserver).unwrap();

    let mut reference = Model::mlp(&[4, 5, 3], Activation::Tanh).unwrap();
    init_weights(&mut reference, cfg.seed).unwrap();
    let mut w: Vec<Tensor> = reference.params().into_iter().cloned().collect();
    for _ in 0..cfg.epochs {
        let tape = Tape::new();
        let params: Vec<Var> = w.iter().map(|t| tape.var(t.clone())).collect();
        let loss = cross_entropy_var(reference.forward_var(&params, tape.constant(x.clone())).unwrap(), &y).unwrap();
        tape.backward(loss).unwrap();
        for (wi, p) in w.iter_mut().zip(&params) {
            wi.axpy(-cfg.learning_rate, &p.grad()).unwrap();
        }
    }
    for (a, b) in out.state.weights.iter().zip(&w) {
        for (p, q) in a.data().iter().zip(b.data()) {
            assert!((p - q).abs() <= 1e-12 * (1.0 + q.abs()), "{p} vs {q}");
        }
    }
    assert_eq!(out.state.step, cfg.epochs);
}

#[test]
fn epochs_take_ceil_n_over_b_steps_and_are_reproducible() {
    let gen = Gen::new(4);
    let (x, y) = blobs(&gen, 50, 3, 2);
    let cfg = OptimizerConfig {
        learning_rate: 0.1,
        batch_size: 8,
        epochs: 3,
        seed: 1,
        ..Default::default()
    };
    let run = || {
        let mut m = Model::mlp(&[3, 2], Activation::Identity).unwrap();
        train_supervised(&mut m, LabeledData::new(&x, &y).unwrap(), &[("all", LabeledData::new(&x, &y).unwrap())], &cfg, &mut NoObserver).unwrap()
    };
    let (a, b) = (run(), run());
    assert_eq!(epochs_to_steps(50, 8), 7);
    assert_eq!(a.state.step, 21);
    assert_eq!(a.history.iter().map(|r| r.step).collect::<Vec<_>>(), vec![7, 7, 14, 14, 21, 21]);
    assert_eq!(a.history, b.history);
    assert_eq!(a.state.weights, b.state.weights);
    assert!(a.final_accuracy("all").unwrap() > 0.9);
}

#[test]
fn step_decay_schedule() {
    let cfg = OptimizerConfig {
        learning_rate: 1.0,
        lr_schedule: Some(StepDecay { factor: 0.5, every: 2 }),
        ..Default::default()
    };
    let lrs: Vec<f64> = (0..5).map(|e| cfg.lr_at(e)).collect();
    assert_eq!(lrs, vec![1.0, 1.0, 0.5, 0.5, 0.25]);
}

#[test]
fn masked_loss_sees_only_masked_labels_and_nearby_features() {
    let data = karate_club();
    let ops = GraphOps::new(&data.graph);
    let mut model = EncoderDecoder::gcn(&[34, 4], Activation::Tanh, 4).unwrap();
    init_weights(&mut model, 0).unwrap();
    let mask = &data.mask.train;

    let grad_wrt_features = |labels: &[usize]| {
        let tape = Tape::new();
        let params = model.bind(&tape);
        let h0 = tape.var(data.features.clone());
        let loss = masked_cross_entropy(model.forward_var(&params, &ops, h0).unwrap(), labels, mask).unwrap();
        tape.backward(loss).unwrap();
        (loss.value().item(), h0.grad())
    };
    let (loss, grad) = grad_wrt_features(&data.labels);

    // Relabelling nodes outside the mask changes nothing.
    let mut other = data.labels.clone();
    for (v, label) in other.iter_mut().enumerate() {
        if !mask.contains(&v) {
            *label = (*label + 1) % 4;
        }
    }
    let (loss2, grad2) = grad_wrt_features(&other);
    assert_eq!(loss, loss2);
    assert_eq!(grad, grad2);

    // One propagation layer only reaches the mask and its neighbours.
    let reach = |v: usize| mask.contains(&v) || mask.iter().any(|&m| data.graph.has_edge(v, m));
    for v in 0..34 {
        let norm: f64 = grad.row(v).iter().map(|g| g.abs()).sum();
        if reach(v) {
            assert!(norm > 0.0, "node {v} should receive gradient");
        } else {
            assert_eq!(norm, 0.0, "node {v} is out of reach");
        }
    }
}

#[test]
fn node_classifier_fits_its_training_nodes() {
    let data = karate_club();
    let ops = GraphOps::new(&data.graph);
    let mut model = EncoderDecoder::gcn(&[34, 4, 4, 2], Activation::Tanh, 4).unwrap();
    let cfg = OptimizerConfig {
        learning_rate: 0.3,
        epochs: 300,
        ..Default::default()
    };
    let out = train_node_classifier(&mut model, &ops, &data.features, &data.labels, &data.mask, &cfg, &mut NoObserver).unwrap();
    let losses: Vec<f64> = out.history.iter().filter(|r| r.split == "train").map(|r| r.loss).collect();
    assert_eq!(losses.len(), 300);
    assert!(losses.last().unwrap() < &(losses[0] * 0.1));
    let bad = NodeMask {
        train: vec![0],
        val: vec![0],
        test: vec![],
    };
    assert!(train_node_classifier(&mut model, &ops, &data.features, &data.labels, &bad, &cfg, &mut NoObserver).is_err());
}
