//! Minibatch SGD on MNIST with a linear classifier or a one-hidden-layer
//! MLP.
//!
//! Usage: `cargo run --release --example mnist_mlp [hidden|0] [epochs] [lr] [mnist dir]`
//!
//! `hidden = 0` trains the linear score `Wx + b`.

use std::path::PathBuf;

use gdl::datasets::{load_mnist_dir, PixelScale};
use gdl::nn::{Activation, Model};
use gdl::training::{train_supervised, CsvMetrics, OptimizerConfig};

fn main() -> gdl::Result<()> {
    let mut args = std::env::args().skip(1);
    let hidden: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(500);
    let epochs = args.next().and_then(|s| s.parse().ok()).unwrap_or(10);
    let lr = args.next().and_then(|s| s.parse().ok()).unwrap_or(0.1);
    let dir = args.next().map(PathBuf::from).unwrap_or_else(|| PathBuf::from("data/mnist"));
    let data = load_mnist_dir(&dir, PixelScale::Unit)?;
    let dims: Vec<usize> = if hidden == 0 { vec![784, 10] } else { vec![784, hidden, 10] };
    let mut model = Model::mlp(&dims, Activation::Relu)?;
    let cfg = OptimizerConfig {
        learning_rate: lr,
        batch_size: 32,
        epochs,
        seed: 1,
        ..Default::default()
    };
    let csv = std::env::temp_dir().join("mnist_mlp_metrics.csv");
    let mut metrics = CsvMetrics::create(&csv)?;
    let out = train_supervised(&mut model, data.train.view(), &[("test", data.test.view())], &cfg, &mut metrics)?;
    for r in &out.history {
        println!("epoch {:>3} {:<5} loss {:.4} accuracy {:.4}", r.epoch, r.split, r.loss, r.accuracy);
    }
    println!("metrics written to {}", csv.display());
    Ok(())
}
