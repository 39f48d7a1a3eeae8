//! Reverse-mode gradients of an MLP's cross-entropy loss against central
//! finite differences, coordinate by coordinate.
//!
//! Usage: `cargo run --example gradient_check [seed]`

use gdl::losses::cross_entropy_var;
use gdl::nn::{Activation, Model, Parameterized};
use gdl::training::{init_weights, rng_from_seed};
use gdl::{Tape, Tensor};
use rand::Rng;

fn loss(model: &Model, w: &Tensor, x: &Tensor, y: &[usize]) -> gdl::Result<f64> {
    let tape = Tape::new();
    let wv = tape.constant(w.clone());
    let scores = model.forward_var(&model.unflatten(wv)?, tape.constant(x.clone()))?;
    Ok(cross_entropy_var(scores, y)?.value().item())
}

fn main() -> gdl::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0);
    let mut model = Model::mlp(&[3, 5, 4], Activation::Tanh)?;
    init_weights(&mut model, seed)?;
    let mut rng = rng_from_seed(seed);
    let x = Tensor::matrix(6, 3, (0..18).map(|_| rng.random_range(-1.0..1.0)).collect())?;
    let y: Vec<usize> = (0..6).map(|_| rng.random_range(0..4)).collect();
    let mut w = model.weights_flat();

    let tape = Tape::new();
    let wv = tape.var(w.clone());
    let scores = model.forward_var(&model.unflatten(wv)?, tape.constant(x.clone()))?;
    tape.backward(cross_entropy_var(scores, &y)?)?;
    let grad = wv.grad();

    let h = 1e-6;
    let mut worst = 0.0f64;
    for i in 0..w.len() {
        let w0 = w.data()[i];
        w.data_mut()[i] = w0 + h;
        let up = loss(&model, &w, &x, &y)?;
        w.data_mut()[i] = w0 - h;
        let down = loss(&model, &w, &x, &y)?;
        w.data_mut()[i] = w0;
        let fd = (up - down) / (2.0 * h);
        let rel = (grad.data()[i] - fd).abs() / grad.data()[i].abs().max(fd.abs()).max(1e-2);
        worst = worst.max(rel);
        if i < 6 {
            println!("w[{i:>2}]  tape {:+.8}  finite difference {fd:+.8}", grad.data()[i]);
        }
    }
    println!("{} weights, largest relative error {worst:.2e}", w.len());
    Ok(())
}
