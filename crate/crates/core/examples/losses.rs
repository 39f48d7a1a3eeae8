//! Softmax, cross-entropy, Shannon entropy and KL divergence on a score
//! vector, and the regression losses on a residual.
//!
//! Usage: `cargo run --example losses`

use gdl::losses::{cross_entropy, kl_divergence, regression_loss, shannon_entropy, softmax, ClassDistribution, RegressionLoss};
use gdl::Tensor;

fn main() -> gdl::Result<()> {
    let p = softmax(&[2.0, 1.0, 0.1])?;
    let q = ClassDistribution::mass(3, 0)?;
    println!("p = softmax(2, 1, 0.1) = {:.4?}", p.probs());
    println!("H(p) = {:.4}  (sum p log p)", shannon_entropy(&p));
    println!("H(q, p) = {:.4}  with q the mass at class 0", cross_entropy(&q, &p)?);
    println!("KL(q || p) = {:.4} = H(q) + H(q, p)", kl_divergence(&q, &p)?);
    let r = ClassDistribution::uniform(3);
    println!("KL(u || p) = {:.4}, KL(p || u) = {:.4}", kl_divergence(&r, &p)?, kl_divergence(&p, &r)?);

    let pred = Tensor::matrix(4, 1, vec![0.5, -1.0, 2.5, 0.0])?;
    let target = Tensor::matrix(4, 1, vec![0.0, 0.0, 0.0, 0.0])?;
    for kind in [RegressionLoss::Mse, RegressionLoss::Rmse, RegressionLoss::Mae, RegressionLoss::Huber(1.0), RegressionLoss::LogCosh] {
        println!("{kind:?}: {:.4}", regression_loss(kind, &pred, &target)?);
    }
    Ok(())
}
