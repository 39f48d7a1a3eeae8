//! Fisher information of a small tanh MLP at one input: rank below the
//! number of classes, the covariance and expected-Hessian identities, and
//! KL divergence against the quadratic form `½ δwᵀ F δw`.
//!
//! Usage: `cargo run --release --example fisher_rank [seed]`

use gdl::fisher::{fisher_matrix, kl_quadratic_check};
use gdl::nn::{Activation, Model, Parameterized};
use gdl::training::{init_weights, rng_from_seed};
use gdl::Tensor;
use rand::Rng;

fn main() -> gdl::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0);
    let mut model = Model::mlp(&[4, 6, 3], Activation::Tanh)?;
    init_weights(&mut model, seed)?;
    let mut rng = rng_from_seed(seed);
    let x = Tensor::vector((0..4).map(|_| rng.random_range(-1.0..1.0)).collect());
    let w = model.weights_flat();
    let report = fisher_matrix(&model, &x, &w)?;
    println!("{} weights, {} classes", report.n_weights, model.out_len());
    let sv: Vec<String> = report.singular_values.iter().map(|v| format!("{v:.3e}")).collect();
    println!("singular values {}", sv.join(" "));
    println!("numerical rank {} (at most {})", report.numerical_rank, model.out_len() - 1);
    if let Some(r) = report.identities {
        println!("|E_p[grad I]|      {:.2e}", r.expectation);
        println!("|F - Cov(grad I)|  {:.2e}", r.covariance);
        println!("|F - E_p[Hess I]|  {:.2e}", r.hessian);
    }
    let dir = Tensor::vector((0..w.len()).map(|_| rng.random_range(-1.0..1.0)).collect());
    let norm = dir.data().iter().map(|v| v * v).sum::<f64>().sqrt();
    for scale in [1e-1, 1e-2, 1e-3, 1e-4] {
        let (kl, quad) = kl_quadratic_check(&model, &x, &w, &dir.scale(scale / norm))?;
        println!("|dw| = {scale:.0e}: KL {kl:.4e}  quadratic {quad:.4e}  ratio {:.6}", kl / quad);
    }
    Ok(())
}
