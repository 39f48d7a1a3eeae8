//! Fisher information of a classifier's class distribution `p(x, w)` with
//! respect to its weights, and the identities relating it to the
//! information loss `I = −log p`.
//!
//! All expectations are exact sums over the `C` classes. Large models never
//! materialize `F`: its nonzero spectrum is read off the `C × C` Gram matrix
//! of the scaled score gradients, and identity residuals are evaluated on a
//! fixed subset of weight coordinates.

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::index;
use rayon::prelude::*;

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::graph::symmetric_eigenvalues;
use crate::nn::{Model, Parameterized};
use crate::tensor::Tensor;
use crate::training::rng_from_seed;

/// Relative threshold for counting singular values.
pub const RANK_TOLERANCE: f64 = 1e-8;

/// A model producing class log-probabilities from a flat weight vector.
pub trait Classifier {
    fn n_classes(&self) -> usize;

    fn n_weights(&self) -> usize;

    /// `log p_i(x, w)` for every class, as a length `C` variable.
    fn log_probs<'t>(&self, w: Var<'t>, x: &Tensor) -> Result<Var<'t>>;
}

impl Classifier for Model {
    fn n_classes(&self) -> usize {
        self.out_len()
    }

    fn n_weights(&self) -> usize {
        self.n_params()
    }

    fn log_probs<'t>(&self, w: Var<'t>, x: &Tensor) -> Result<Var<'t>> {
        if w.shape() != [self.n_params()] {
            return Err(Error::shape("log_probs", &[self.n_params()], &w.shape()));
        }
        let params = self.unflatten(w)?;
        let x = x.reshape(&[1, x.len()])?;
        let scores = self.forward_var(&params, w.tape().constant(x))?;
        scores.log_softmax_rows()?.reshape(&[self.out_len()])
    }
}

/// Tuning knobs for [`fisher_matrix_with`].
#[derive(Clone, Debug)]
pub struct FisherOptions {
    /// Build the dense `p × p` matrix only up to this many weights.
    pub dense_limit: usize,
    /// Weight coordinates on which identity residuals are checked; all of
    /// them when the model is no larger.
    pub check_coords: usize,
    /// Central-difference step for Hessian columns.
    pub fd_step: f64,
    /// Chooses the checked coordinates of large models.
    pub seed: u64,
}

impl Default for FisherOptions {
    fn default() -> Self {
        FisherOptions {
            dense_limit: 2048,
            check_coords: 64,
            fd_step: 1e-5,
            seed: 0,
        }
    }
}

/// Max-norm residuals of the three identities satisfied by `F`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IdentityResiduals {
    /// `‖E_p[∇I]‖_∞`.
    pub expectation: f64,
    /// `‖F − Cov_p(∇I)‖_max`.
    pub covariance: f64,
    /// `‖F − E_p[H(I)]‖_max`.
    pub hessian: f64,
    /// Number of weight coordinates whose columns were checked.
    pub coords: usize,
}

#[derive(Clone, Debug)]
pub struct FisherReport {
    /// Dense `F`, present when the model is small enough.
    pub f: Option<Tensor>,
    /// Descending; only the possibly nonzero ones are listed.
    pub singular_values: Vec<f64>,
    pub numerical_rank: usize,
    pub n_weights: usize,
    pub probs: Vec<f64>,
    pub identities: Option<IdentityResiduals>,
}

impl FisherReport {
    /// CSV with columns `quantity,index,value`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("quantity,index,value\n");
        let _ = writeln!(s, "n_weights,0,{}", self.n_weights);
        let _ = writeln!(s, "numerical_rank,0,{}", self.numerical_rank);
        for (i, v) in self.singular_values.iter().enumerate() {
            let _ = writeln!(s, "singular_value,{i},{v:e}");
        }
        for (i, v) in self.probs.iter().enumerate() {
            let _ = writeln!(s, "probability,{i},{v:e}");
        }
        if let Some(r) = &self.identities {
            let _ = writeln!(s, "residual_expectation,0,{:e}", r.expectation);
            let _ = writeln!(s, "residual_covariance,0,{:e}", r.covariance);
            let _ = writeln!(s, "residual_hessian,0,{:e}", r.hessian);
            let _ = writeln!(s, "checked_coords,0,{}", r.coords);
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

/// Class probabilities and `∇_w log p_i` for every class.
#[derive(Clone, Debug)]
pub struct ScoreGradients {
    pub probs: Vec<f64>,
    /// `C` rows of length `p`.
    pub grads: Vec<Vec<f64>>,
}

fn check_weights<M: Classifier + Sync + ?Sized>(m: &M, w: &Tensor) -> Result<()> {
    if w.len() != m.n_weights() {
        return Err(Error::shape("fisher weights", &[m.n_weights()], w.shape()));
    }
    Ok(())
}

fn log_probs_value<M: Classifier + Sync + ?Sized>(m: &M, x: &Tensor, w: &Tensor) -> Result<Vec<f64>> {
    let tape = Tape::new();
    let lp = m.log_probs(tape.constant(w.reshape(&[w.len()])?), x)?;
    let out = lp.value().data().to_vec();
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteProbability);
    }
    Ok(out)
}

/// Gradient of `Σ_i c_i log p_i(x, w)`.
fn weighted_log_prob_grad<M: Classifier + Sync + ?Sized>(m: &M, x: &Tensor, w: &Tensor, c: &[f64]) -> Result<Vec<f64>> {
    let tape = Tape::new();
    let wv = tape.var(w.reshape(&[w.len()])?);
    let lp = m.log_probs(wv, x)?;
    let root = lp.mul(tape.constant(Tensor::vector(c.to_vec())))?.sum();
    tape.backward(root)?;
    Ok(wv.grad().into_data())
}

pub fn score_gradients<M: Classifier + Sync + ?Sized>(m: &M, x: &Tensor, w: &Tensor) -> Result<ScoreGradients> {
    check_weights(m, w)?;
    let c = m.n_classes();
    let probs: Vec<f64> = log_probs_value(m, x, w)?.iter().map(|l| l.exp()).collect();
    if probs.iter().any(|&p| !(p > 0.0)) {
        return Err(Error::NonFiniteProbability);
    }
    let grads = (0..c)
        .into_par_iter()
        .map(|i| {
            let mut e = vec![0.0; c];
            e[i] = 1.0;
            weighted_log_prob_grad(m, x, w, &e)
        })
        .collect::<Result<Vec<_>>>()?;
    if grads.iter().flatten().any(|g| !g.is_finite()) {
        return Err(Error::NonFiniteProbability);
    }
    Ok(ScoreGradients { probs, grads })
}

impl ScoreGradients {
    pub fn n_weights(&self) -> usize {
        self.grads.first().map_or(0, Vec::len)
    }

    /// `F_ab = Σ_i p_i ∂_a log p_i ∂_b log p_i`.
    pub fn fisher_entry(&self, a: usize, b: usize) -> f64 {
        self.probs.iter().zip(&self.grads).map(|(p, g)| p * g[a] * g[b]).sum()
    }

    /// Dense `F`.
    pub fn fisher_dense(&self) -> Tensor {
        let p = self.n_weights();
        let mut f = Tensor::zeros(&[p, p]);
        for (pi, g) in self.probs.iter().zip(&self.grads) {
            for a in 0..p {
                let ga = pi * g[a];
                if ga == 0.0 {
                    continue;
                }
                for (fab, gb) in f.row_mut(a).iter_mut().zip(g) {
                    *fab += ga * gb;
                }
            }
        }
        f
    }

    /// `E_p[∇I] = −Σ_i p_i ∇log p_i`.
    pub fn expected_info_gradient(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.n_weights()];
        for (p, g) in self.probs.iter().zip(&self.grads) {
            for (o, gi) in out.iter_mut().zip(g) {
                *o -= p * gi;
            }
        }
        out
    }

    /// `Cov_p(∇I)_ab` with the mean subtracted explicitly.
    pub fn covariance_entry(&self, mean: &[f64], a: usize, b: usize) -> f64 {
        self.probs
            .iter()
            .zip(&self.grads)
            .map(|(p, g)| p * (-g[a] - mean[a]) * (-g[b] - mean[b]))
            .sum()
    }

    /// Gram matrix of the rows `√p_i ∇log p_i`.
    fn gram(&self) -> Tensor {
        let c = self.probs.len();
        let mut gram = Tensor::zeros(&[c, c]);
        for i in 0..c {
            for j in 0..=i {
                let d: f64 = self.grads[i].iter().zip(&self.grads[j]).map(|(a, b)| a * b).sum();
                let v = (self.probs[i] * self.probs[j]).sqrt() * d;
                gram.set(i, j, v);
                gram.set(j, i, v);
            }
        }
        gram
    }
}

/// Singular values (descending) of `MᵀM` from the Gram matrix `MMᵀ`.
fn spectrum_from_gram(gram: &Tensor) -> Result<Vec<f64>> {
    let mut sv: Vec<f64> = symmetric_eigenvalues(gram)?.into_iter().map(f64::abs).collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    Ok(sv)
}

/// Count of values above `RANK_TOLERANCE · max`.
pub fn numerical_rank(singular_values: &[f64]) -> usize {
    let max = singular_values.iter().copied().fold(0.0, f64::max);
    if max == 0.0 {
        return 0;
    }
    singular_values.iter().filter(|&&s| s > RANK_TOLERANCE * max).count()
}

/// `I_i(x, w) = −log p_i(x, w)` for every class.
pub fn information_loss<M: Classifier + Sync + ?Sized>(m: &M, x: &Tensor, w: &Tensor) -> Result<Vec<f64>> {
    check_weights(m, w)?;
    Ok(log_probs_value(m, x, w)?.into_iter().map(|l| -l).collect())
}

pub fn expectation_of_score_gradient<M: Classifier + Sync + ?Sized>(m: &M, x: &Tensor, w: &Tensor) -> Result<Tensor> {
    Ok(Tensor::vector(score_gradients(m, x, w)?.expected_info_gradient()))
}

fn check_columns(p: usize, opts: &FisherOptions) -> Vec<usize> {
    if p <= opts.check_coords {
        return (0..p).collect();
    }
    let mut cols = index::sample(&mut rng_from_seed(opts.seed), p, opts.check_coords).into_vec();
    cols.sort_unstable();
    cols
}

fn covariance_residual(sg: &ScoreGradients, cols: &[usize]) -> f64 {
    let mean = sg.expected_info_gradient();
    let mut worst: f64 = 0.0;
    for &b in cols {
        for a in 0..sg.n_weights() {
            worst = worst.max((sg.fisher_entry(a, b) - sg.covariance_entry(&mean, a, b)).abs());
        }
    }
    worst
}

/// `E_p[H(I)]` column `b`, by central differences of the autodiff gradient
/// of `−Σ_i p̄_i log p_i(w)` with `p̄` frozen at `w`.
fn expected_hessian_column<M: Classifier + Sync + ?Sized>(m: &M, x: &Tensor, w: &Tensor, probs: &[f64], b: usize, h: f64) -> Result<Vec<f64>> {
    let neg: Vec<f64> = probs.iter().map(|p| -p).collect();
    let mut plus = w.reshape(&[w.len()])?;
    let mut minus = plus.clone();
    plus.data_mut()[b] += h;
    minus.data_mut()[b] -= h;
    let gp = weighted_log_prob_grad(m, x, &plus, &neg)?;
    let gm = weighted_log_prob_grad(m, x, &minus, &neg)?;
    Ok(gp.iter().zip(&gm).map(|(p, q)| (p - q) / (2.0 * h)).collect())
}

fn hessian_residual<M: Classifier + Sync + ?Sized>(
    m: &M,
    x: &Tensor,
    w: &Tensor,
    sg: &ScoreGradients,
    cols: &[usize],
    h: f64,
) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for &b in cols {
        let col = expected_hessian_column(m, x, w, &sg.probs, b, h)?;
        for (a, hab) in col.iter().enumerate() {
            worst = worst.max((sg.fisher_entry(a, b) - hab).abs());
        }
    }
    Ok(worst)
}

pub fn fisher_as_covariance<M: Classifier + Sync + ?Sized>(m: &M, x: &Tensor, w: &Tensor) -> Result<f64> {
    let sg = score_gradients(m, x, w)?;
    Ok(covariance_residual(&sg, &(0..sg.n_weights()).collect::<Vec<_>>()))
}

pub fn fisher_as_expected_hessian<M: Classifier + Sync + ?Sized>(m: &M, x: &Tensor, w: &Tensor) -> Result<f64> {
    let sg = score_gradients(m, x, w)?;
    let cols: Vec<usize> = (0..sg.n_weights()).collect();
    hessian_residual(m, x, w, &sg, &cols, FisherOptions::default().fd_step)
}

/// `max ‖Σ_i H(p_i)‖` over the given columns, by central differences.
pub fn summed_probability_hessian<M: Classifier + Sync + ?Sized>(m: &M, x: &Tensor, w: &Tensor, h: f64) -> Result<f64> {
    check_weights(m, w)?;
    let p = w.len();
    let mut worst: f64 = 0.0;
    for b in 0..p {
        let mut plus = w.reshape(&[p])?;
        let mut minus = plus.clone();
        plus.data_mut()[b] += h;
        minus.data_mut()[b] -= h;
        let prob_grad = |wt: &Tensor| -> Result<Vec<f64>> {
            let tape = Tape::new();
            let wv = tape.var(wt.clone());
            tape.backward(m.log_probs(wv, x)?.exp().sum())?;
            Ok(wv.grad().into_data())
        };
        let (gp, gm) = (prob_grad(&plus)?, prob_grad(&minus)?);
        for (a, c) in gp.iter().zip(&gm) {
            worst = worst.max(((a - c) / (2.0 * h)).abs());
        }
    }
    Ok(worst)
}

pub fn fisher_matrix<M: Classifier + Sync + ?Sized>(m: &M, x: &Tensor, w: &Tensor) -> Result<FisherReport> {
    fisher_matrix_with(m, x, w, &FisherOptions::default())
}

pub fn fisher_matrix_with<M: Classifier + Sync + ?Sized>(m: &M, x: &Tensor, w: &Tensor, opts: &FisherOptions) -> Result<FisherReport> {
    let sg = score_gradients(m, x, w)?;
    let p = sg.n_weights();
    let singular_values = spectrum_from_gram(&sg.gram())?;
    let cols = check_columns(p, opts);
    let identities = IdentityResiduals {
        expectation: sg.expected_info_gradient().iter().fold(0.0, |a, v| a.max(v.abs())),
        covariance: covariance_residual(&sg, &cols),
        hessian: hessian_residual(m, x, w, &sg, &cols, opts.fd_step)?,
        coords: cols.len(),
    };
    Ok(FisherReport {
        f: (p <= opts.dense_limit).then(|| sg.fisher_dense()),
        numerical_rank: numerical_rank(&singular_values),
        singular_values,
        n_weights: p,
        probs: sg.probs,
        identities: Some(identities),
    })
}

/// `F(w) = Σ_x F(x, w)` over a set of inputs.
pub fn summed_fisher<M: Classifier + Sync + ?Sized>(m: &M, xs: &[Tensor], w: &Tensor, opts: &FisherOptions) -> Result<FisherReport> {
    if xs.is_empty() {
        return Err(Error::EmptyMask);
    }
    let parts = xs.iter().map(|x| score_gradients(m, x, w)).collect::<Result<Vec<_>>>()?;
    let rows: Vec<Vec<f64>> = parts
        .iter()
        .flat_map(|sg| sg.probs.iter().zip(&sg.grads).map(|(p, g)| g.iter().map(|v| p.sqrt() * v).collect()))
        .collect();
    let k = rows.len();
    let mut gram = Tensor::zeros(&[k, k]);
    for i in 0..k {
        for j in 0..=i {
            let d: f64 = rows[i].iter().zip(&rows[j]).map(|(a, b)| a * b).sum();
            gram.set(i, j, d);
            gram.set(j, i, d);
        }
    }
    let singular_values = spectrum_from_gram(&gram)?;
    let p = w.len();
    let f = if p <= opts.dense_limit {
        let mut f = Tensor::zeros(&[p, p]);
        for sg in &parts {
            f.axpy(1.0, &sg.fisher_dense())?;
        }
        Some(f)
    } else {
        None
    };
    Ok(FisherReport {
        f,
        numerical_rank: numerical_rank(&singular_values),
        singular_values,
        n_weights: p,
        probs: Vec::new(),
        identities: None,
    })
}

/// `(KL(p(x, w+δw) ‖ p(x, w)), ½ δwᵀ F δw)`.
pub fn kl_quadratic_check<M: Classifier + Sync + ?Sized>(m: &M, x: &Tensor, w: &Tensor, dw: &Tensor) -> Result<(f64, f64)> {
    let sg = score_gradients(m, x, w)?;
    if dw.len() != w.len() {
        return Err(Error::shape("kl_quadratic_check", &[w.len()], dw.shape()));
    }
    let lp0 = log_probs_value(m, x, w)?;
    let lp1 = log_probs_value(m, x, &w.reshape(&[w.len()])?.add(&dw.reshape(&[dw.len()])?)?)?;
    let kl = lp1.iter().zip(&lp0).map(|(a, b)| a.exp() * (a - b)).sum();
    let quad = 0.5
        * sg.probs
            .iter()
            .zip(&sg.grads)
            .map(|(p, g)| {
                let d: f64 = g.iter().zip(dw.data()).map(|(a, b)| a * b).sum();
                p * d * d
            })
            .sum::<f64>();
    Ok((kl, quad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Activation;
    use crate::training::init_weights;

    /// `p = (σ(t), 1 − σ(t))` from scores `(t, 0)`.
    struct Logistic;

    impl Classifier for Logistic {
        fn n_classes(&self) -> usize {
            2
        }

        fn n_weights(&self) -> usize {
            1
        }

        fn log_probs<'t>(&self, w: Var<'t>, _x: &Tensor) -> Result<Var<'t>> {
            let zero = w.tape().constant(Tensor::zeros(&[1, 1]));
            Var::concat_cols(&[w.reshape(&[1, 1])?, zero])?.log_softmax_rows()?.reshape(&[2])
        }
    }

    fn sigmoid(t: f64) -> f64 {
        1.0 / (1.0 + (-t).exp())
    }

    #[test]
    fn logistic_fisher_matches_closed_form() {
        let x = Tensor::zeros(&[1]);
        for t in [-2.0, -0.3, 0.0, 0.7, 3.0] {
            let w = Tensor::vector(vec![t]);
            let r = fisher_matrix(&Logistic, &x, &w).unwrap();
            let s = sigmoid(t);
            let f = r.f.unwrap().item();
            assert!((f - s * (1.0 - s)).abs() < 1e-14);
            let h = 1e-6;
            let lp = |t: f64| [sigmoid(t).ln(), (1.0 - sigmoid(t)).ln()];
            let (a, b) = (lp(t + h), lp(t - h));
            let brute: f64 = [s, 1.0 - s]
                .iter()
                .enumerate()
                .map(|(i, p)| p * ((a[i] - b[i]) / (2.0 * h)).powi(2))
                .sum();
            assert!((f - brute).abs() < 1e-8);
            let id = r.identities.unwrap();
            assert!(id.hessian < 1e-6, "{id:?}");
            assert_eq!(r.numerical_rank, 1);
        }
    }

    fn toy() -> (Model, Tensor, Tensor) {
        let mut m = Model::mlp(&[3, 4, 3], Activation::Tanh).unwrap();
        init_weights(&mut m, 5).unwrap();
        let w = m.weights_flat();
        (m, Tensor::vector(vec![0.4, -1.2, 0.9]), w)
    }

    #[test]
    fn toy_identities() {
        let (m, x, w) = toy();
        let r = fisher_matrix(&m, &x, &w).unwrap();
        let f = r.f.as_ref().unwrap();
        assert!(f.is_symmetric(1e-12));
        assert!(r.numerical_rank <= 2);
        let id = r.identities.unwrap();
        assert_eq!(id.coords, m.n_params());
        assert!(id.expectation < 1e-9 && id.covariance < 1e-9 && id.hessian < 1e-6, "{id:?}");
        assert!(summed_probability_hessian(&m, &x, &w, 1e-5).unwrap() < 1e-6);
    }

    #[test]
    fn kl_matches_quadratic_form() {
        let (m, x, w) = toy();
        assert_eq!(kl_quadratic_check(&m, &x, &w, &Tensor::zeros(&[w.len()])).unwrap(), (0.0, 0.0));
        let dir: Vec<f64> = (0..w.len()).map(|i| ((i * 7 % 11) as f64 - 5.0) / 5.0).collect();
        let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
        let dw = Tensor::vector(dir.iter().map(|v| v / norm * 1e-4).collect());
        let (kl, quad) = kl_quadratic_check(&m, &x, &w, &dw).unwrap();
        assert!((kl / quad - 1.0).abs() < 0.01, "{kl} {quad}");
    }

    #[test]
    fn csv_layout() {
        let r = fisher_matrix(&Logistic, &Tensor::zeros(&[1]), &Tensor::vector(vec![0.5])).unwrap();
        let csv = r.to_csv();
        assert!(csv.starts_with("quantity,index,value\nn_weights,0,1\nnumerical_rank,0,1\n"));
        assert!(csv.contains("residual_hessian,0,"));
    }
}
