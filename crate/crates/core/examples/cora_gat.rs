//! Two-layer graph attention network (8 heads × 8 features → 7 classes, ELU)
//! on Cora with the 140/500/1000 split.
//!
//! Usage: `cargo run --release --example cora_gat [cora dir] [epochs] [lr]`
//!
//! Without `cora.content`/`cora.cites` in the directory (default `data/cora`
//! or `$GDL_CORA_DIR`) the run falls back to a seeded planted-partition graph
//! of the same size, and says so.

use std::path::PathBuf;

use gdl::datasets::{cora_paths, load_cora, planted_partition, PlantedPartition};
use gdl::gnn::{gat_attention_with, EncoderDecoder, EncoderLayer, GraphOps};
use gdl::nn::Activation;
use gdl::training::{evaluate_accuracy, train_node_classifier, OptimizerConfig};

fn main() -> gdl::Result<()> {
    let mut args = std::env::args().skip(1);
    let dir = args
        .next()
        .map(PathBuf::from)
        .or_else(|| std::env::var_os("GDL_CORA_DIR").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("data/cora"));
    let epochs = args.next().and_then(|s| s.parse().ok()).unwrap_or(200);
    let lr = args.next().and_then(|s| s.parse().ok()).unwrap_or(0.5);
    let (content, cites) = cora_paths(&dir);
    let data = if content.exists() && cites.exists() {
        load_cora(&content, &cites, 0)?
    } else {
        println!("no Cora files in {}; using a synthetic planted-partition graph", dir.display());
        planted_partition(&PlantedPartition::default(), 0)?
    };
    println!(
        "{} nodes, {} edges, {} features, {} classes",
        data.graph.n_nodes(),
        data.graph.n_edges(),
        data.features.cols(),
        data.classes
    );
    let ops = GraphOps::new(&data.graph);
    let mut model = EncoderDecoder::gat(data.features.cols(), 8, 8, data.classes, Activation::Elu, true)?;
    let cfg = OptimizerConfig {
        learning_rate: lr,
        epochs,
        seed: 0,
        log_every: 25,
        ..Default::default()
    };
    let mut rows = Vec::new();
    train_node_classifier(&mut model, &ops, &data.features, &data.labels, &data.mask, &cfg, &mut rows)?;
    for r in rows.iter().filter(|r| r.split != "val") {
        println!("epoch {:>4} {:<5} loss {:.4} accuracy {:.4}", r.epoch, r.split, r.loss, r.accuracy);
    }
    let scores = model.score(&ops, &data.features)?;
    for (name, idx) in [("train", &data.mask.train), ("val", &data.mask.val), ("test", &data.mask.test)] {
        println!("final {name} accuracy {:.4}", evaluate_accuracy(&scores, &data.labels, idx)?);
    }
    if let EncoderLayer::Gat(first) = &model.encoder()[0] {
        let att = gat_attention_with(first, &ops, &data.features)?;
        println!("largest |sum of attention row - 1|: {:.2e}", att.max_row_sum_error());
    }
    Ok(())
}
