//! Semi-supervised node classification on Zachary's karate club: a
//! Kipf–Welling encoder 34→4→4→2 with a linear decoder 2→4, trained on one
//! labelled node per class.
//!
//! Usage: `cargo run --release --example karate_club [epochs] [lr]`

use gdl::datasets::karate_club_with_seed;
use gdl::gnn::{EncoderDecoder, GraphOps};
use gdl::nn::Activation;
use gdl::training::{train_node_classifier, NoObserver, OptimizerConfig};

fn main() -> gdl::Result<()> {
    let mut args = std::env::args().skip(1);
    let epochs = args.next().and_then(|s| s.parse().ok()).unwrap_or(500);
    let lr = args.next().and_then(|s| s.parse().ok()).unwrap_or(0.3);
    for seed in 0..5 {
        let data = karate_club_with_seed(seed);
        let ops = GraphOps::new(&data.graph);
        let mut model = EncoderDecoder::gcn(&[34, 4, 4, 2], Activation::Tanh, 4)?;
        let cfg = OptimizerConfig {
            learning_rate: lr,
            epochs,
            seed,
            log_every: epochs,
            ..Default::default()
        };
        let out = train_node_classifier(&mut model, &ops, &data.features, &data.labels, &data.mask, &cfg, &mut NoObserver)?;
        println!(
            "seed {seed}: train nodes {:?}, train loss {:.4}, validation accuracy {:.3}",
            data.mask.train,
            out.final_loss("train").unwrap_or(f64::NAN),
            out.final_accuracy("val").unwrap_or(f64::NAN)
        );
    }
    Ok(())
}
