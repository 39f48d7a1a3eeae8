//! A small convolutional network on MNIST: four 5×5 valid convolutions with
//! ReLU, 2×2 max pooling, then an affine map to the 10 classes.
//!
//! Usage: `cargo run --release --example mnist_cnn [train samples] [epochs] [lr] [mnist dir]`

use std::path::PathBuf;

use gdl::autodiff::PoolKind;
use gdl::datasets::{load_mnist_dir, PixelScale};
use gdl::nn::{Activation, AffineLayer, Conv2dLayer, Conv2dSpec, Layer, Model, ModelLayer, PoolSpec};
use gdl::training::{train_supervised, NoObserver, OptimizerConfig};
use gdl::Tensor;

const CHANNELS: usize = 4;

fn main() -> gdl::Result<()> {
    let mut args = std::env::args().skip(1);
    let samples = args.next().and_then(|s| s.parse().ok()).unwrap_or(12000);
    let epochs = args.next().and_then(|s| s.parse().ok()).unwrap_or(2);
    let lr = args.next().and_then(|s| s.parse().ok()).unwrap_or(0.05);
    let dir = args.next().map(PathBuf::from).unwrap_or_else(|| PathBuf::from("data/mnist"));
    let data = load_mnist_dir(&dir, PixelScale::Unit)?;
    let train = data.train.head(samples)?;

    let channels = (0..CHANNELS)
        .map(|_| Conv2dSpec::valid(Tensor::zeros(&[5, 5]), 28, 28, 1))
        .collect::<gdl::Result<Vec<_>>>()?;
    let (r, s) = channels[0].output_dims();
    let pool = PoolSpec::grid(CHANNELS, r, s, 2, PoolKind::Max)?;
    let pooled = pool.out_len();
    let mut model = Model::new(vec![
        ModelLayer {
            layer: Layer::Conv2d(Conv2dLayer { channels }),
            activation: Some(Activation::Relu),
        },
        ModelLayer {
            layer: Layer::Pool(pool),
            activation: None,
        },
        ModelLayer {
            layer: Layer::Affine(AffineLayer::zeros(pooled, 10)),
            activation: None,
        },
    ])?;
    println!("conv {CHANNELS}x{r}x{s} -> max pool {pooled} -> 10; training on {} images", train.len());
    let cfg = OptimizerConfig {
        learning_rate: lr,
        batch_size: 32,
        epochs,
        seed: 0,
        ..Default::default()
    };
    let out = train_supervised(&mut model, train.view(), &[("test", data.test.view())], &cfg, &mut NoObserver)?;
    for r in &out.history {
        println!("epoch {:>3} {:<5} loss {:.4} accuracy {:.4}", r.epoch, r.split, r.loss, r.accuracy);
    }
    Ok(())
}
