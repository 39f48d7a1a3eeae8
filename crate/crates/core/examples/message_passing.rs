//! The three message passing variants (generic mean aggregation,
//! Kipf–Welling, GraphSAGE) and a graph attention layer on the karate club,
//! with a check that relabelling the nodes permutes the outputs.
//!
//! Usage: `cargo run --example message_passing [seed]`

use gdl::datasets::karate_graph;
use gdl::gnn::{gat_attention, GatLayer, MessagePassingLayer, MpVariant};
use gdl::graph::permute_rows;
use gdl::nn::Activation;
use gdl::training::rng_from_seed;
use gdl::Tensor;
use rand::seq::SliceRandom;
use rand::Rng;

fn random(rng: &mut impl Rng, rows: usize, cols: usize) -> gdl::Result<Tensor> {
    Tensor::matrix(rows, cols, (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect())
}

fn max_gap(a: &Tensor, b: &Tensor) -> f64 {
    a.data().iter().zip(b.data()).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

fn main() -> gdl::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0);
    let mut rng = rng_from_seed(seed);
    let g = karate_graph();
    let n = g.n_nodes();
    let h = random(&mut rng, n, 5)?;
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut rng);
    let (pg, ph) = (g.permute(&perm)?, permute_rows(&h, &perm)?);

    for variant in [MpVariant::Generic, MpVariant::KipfWelling, MpVariant::GraphSage] {
        let b = (variant != MpVariant::KipfWelling).then(|| random(&mut rng, 3, 5)).transpose()?;
        let layer = MessagePassingLayer::new(variant, random(&mut rng, 3, 5)?, b, Activation::Tanh)?;
        let out = layer.forward(&g, &h)?;
        let gap = max_gap(&permute_rows(&out, &perm)?, &layer.forward(&pg, &ph)?);
        println!("{:<5} node 0 -> {:?}  equivariance gap {gap:.1e}", variant.to_string(), round(out.row(0)));
    }

    let w = (0..2).map(|_| random(&mut rng, 3, 5)).collect::<gdl::Result<Vec<_>>>()?;
    let a = (0..2).map(|_| random(&mut rng, 6, 1)).collect::<gdl::Result<Vec<_>>>()?;
    let gat = GatLayer::new(w, a, Activation::Elu, true)?;
    let out = gat.forward(&g, &h)?;
    let gap = max_gap(&permute_rows(&out, &perm)?, &gat.forward(&pg, &ph)?);
    println!("gat   node 0 -> {:?}  equivariance gap {gap:.1e}", round(out.row(0)));
    let att = gat_attention(&gat, &g, &h)?;
    let row: Vec<String> = att.row(0, 0).map(|(u, a)| format!("{u}:{a:.3}")).collect();
    println!("head 0 attention of node 0: {}", row.join(" "));
    println!("largest |row sum - 1| {:.1e}", att.max_row_sum_error());
    Ok(())
}

fn round(row: &[f64]) -> Vec<f64> {
    row.iter().map(|v| (v * 1000.0).round() / 1000.0).collect()
}
