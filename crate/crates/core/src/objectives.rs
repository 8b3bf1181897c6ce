//! Reference training objectives: next-item generation loss, the two
//! InfoNCE contrastive losses with analytic gradients, the mixed loss,
//! the contrastive-loss diagnostic, and a paired t-test helper.

use ndarray::{Array2, ArrayView2};
use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

/// Mixing coefficients; defaults alpha = 0.125, beta = -0.025, tau_c = 0.5.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub alpha: f64,
    pub beta: f64,
    pub tau_c: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            alpha: 0.125,
            beta: -0.025,
            tau_c: 0.5,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau_c > 0.0 && self.tau_c.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "tau_c must be finite and > 0, got {}",
                self.tau_c
            )));
        }
        Ok(())
    }
}

/// The three N_b x d feature matrices of one batch: target-item tower,
/// user-history tower, and target-conditioned-on-history features.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingBatch {
    pub v_t: Array2<f64>,
    pub v_u: Array2<f64>,
    pub v_tu: Array2<f64>,
}

impl EmbeddingBatch {
    pub fn new(v_t: Array2<f64>, v_u: Array2<f64>, v_tu: Array2<f64>) -> Result<Self> {
        let (n, d) = v_t.dim();
        if n == 0 || d == 0 {
            return Err(Error::EmptyInput("embedding batch must be at least 1 x 1"));
        }
        for (name, m) in [("v_u", &v_u), ("v_tu", &v_tu)] {
            if m.dim() != (n, d) {
                return Err(Error::InvalidArgument(format!(
                    "{name} is {:?}, expected {:?}",
                    m.dim(),
                    (n, d)
                )));
            }
        }
        for m in [&v_t, &v_u, &v_tu] {
            if m.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidArgument(
                    "embedding batch contains NaN or Inf".to_string(),
                ));
            }
        }
        Ok(EmbeddingBatch { v_t, v_u, v_tu })
    }

    pub fn batch_size(&self) -> usize {
        self.v_t.nrows()
    }
}

/// Negated next-item-generation objective: -(1/N_b) * sum over sequences
/// of the sum of target-token log-probabilities. Each inner list carries
/// one sequence's target-token log-probs.
pub fn nig_loss(batch: &[Vec<f64>]) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::EmptyInput("nig_loss needs at least one sequence"));
    }
    let mut total = 0.0;
    for (i, sequence) in batch.iter().enumerate() {
        if sequence.is_empty() {
            return Err(Error::InvalidArgument(format!(
                "sequence {i} has no target tokens"
            )));
        }
        for &lp in sequence {
            if !(lp.is_finite() && lp <= 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "sequence {i} has invalid log-probability {lp}"
                )));
            }
            total -= lp;
        }
    }
    Ok(total / batch.len() as f64)
}

fn row_norms(m: ArrayView2<f64>) -> Result<Vec<f64>> {
    m.rows()
        .into_iter()
        .enumerate()
        .map(|(i, row)| {
            let norm = row.dot(&row).sqrt();
            if norm == 0.0 {
                Err(Error::ZeroNormRow(i))
            } else {
                Ok(norm)
            }
        })
        .collect()
}

/// log(sum(exp(x))) with max-subtraction.
fn logsumexp(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = xs.clone().fold(f64::NEG_INFINITY, f64::max);
    max + xs.map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// InfoNCE loss with analytic gradients w.r.t. both matrices.
///
/// With c[j][i] = cos(a_j, t_i), the loss is
/// -(1/N) * sum_i log( exp(c[i][i]/tau) / sum_j exp(c[j][i]/tau) ):
/// the denominator varies the a-side index j against each fixed anchor
/// t_i. Gradients follow from dL/dc[j][i] = (p[j][i] - [i == j])/(N*tau)
/// with p the column-wise softmax.
pub fn infonce_with_grad(
    a: ArrayView2<f64>,
    t: ArrayView2<f64>,
    tau: f64,
) -> Result<(f64, Array2<f64>, Array2<f64>)> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::InvalidArgument(format!("tau must be finite and > 0, got {tau}")));
    }
    let (n, d) = a.dim();
    if t.dim() != (n, d) {
        return Err(Error::InvalidArgument(format!(
            "matrix shapes differ: {:?} vs {:?}",
            a.dim(),
            t.dim()
        )));
    }
    if n == 0 {
        return Err(Error::EmptyInput("infonce needs at least one row"));
    }
    let a_norms = row_norms(a)?;
    let t_norms = row_norms(t)?;

    // c[j][i] = cos(a_j, t_i).
    let mut cos = a.dot(&t.t());
    for j in 0..n {
        for i in 0..n {
            cos[[j, i]] /= a_norms[j] * t_norms[i];
        }
    }

    let mut loss = 0.0;
    let mut softmax = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        let column = (0..n).map(|j| cos[[j, i]] / tau);
        let lse = logsumexp(column.clone());
        loss += lse - cos[[i, i]] / tau;
        for (j, x) in column.enumerate() {
            softmax[[j, i]] = (x - lse).exp();
        }
    }
    loss /= n as f64;

    let scale = 1.0 / (n as f64 * tau);
    let mut grad_a = Array2::<f64>::zeros((n, d));
    let mut grad_t = Array2::<f64>::zeros((n, d));
    for j in 0..n {
        for i in 0..n {
            let g = scale * (softmax[[j, i]] - if i == j { 1.0 } else { 0.0 });
            if g == 0.0 {
                continue;
            }
            let inv = 1.0 / (a_norms[j] * t_norms[i]);
            let c = cos[[j, i]];
            for k in 0..d {
                grad_a[[j, k]] += g * (t[[i, k]] * inv - c * a[[j, k]] / (a_norms[j] * a_norms[j]));
                grad_t[[i, k]] += g * (a[[j, k]] * inv - c * t[[i, k]] / (t_norms[i] * t_norms[i]));
            }
        }
    }
    Ok((loss, grad_a, grad_t))
}

/// Target/target-conditioned contrastive loss: anchors v_T, candidates v_TU.
pub fn infonce_tt(v_tu: ArrayView2<f64>, v_t: ArrayView2<f64>, tau: f64) -> Result<f64> {
    infonce_with_grad(v_tu, v_t, tau).map(|(loss, _, _)| loss)
}

/// User/target contrastive loss: anchors v_T, candidates v_U.
pub fn infonce_ut(v_u: ArrayView2<f64>, v_t: ArrayView2<f64>, tau: f64) -> Result<f64> {
    infonce_with_grad(v_u, v_t, tau).map(|(loss, _, _)| loss)
}

/// (1 - alpha - beta) * nig + alpha * l_tt + beta * l_ut.
pub fn mixed_loss(nig: f64, l_tt: f64, l_ut: f64, weights: &LossWeights) -> f64 {
    (1.0 - weights.alpha - weights.beta) * nig + weights.alpha * l_tt + weights.beta * l_ut
}

/// Loss-level diagnostic: ratio = N_b * exp(-l_tt) and the implied average
/// positive-vs-negative cosine separation gap = ln(ratio) * tau_c.
pub fn contrastive_diagnostic(l_tt: f64, n_b: usize, tau_c: f64) -> (f64, f64) {
    let ratio = n_b as f64 * (-l_tt).exp();
    (ratio, ratio.ln() * tau_c)
}

/// Paired two-sided t-test result.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TTest {
    pub t: f64,
    pub df: usize,
    pub p: f64,
}

/// Dependent paired-sample t-test over per-user score differences.
/// All-equal nonzero differences give p = 0 (infinite t); all-zero
/// differences are degenerate and rejected.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<TTest> {
    if a.len() != b.len() {
        return Err(Error::InvalidArgument(format!(
            "paired test needs equal lengths, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    let n = a.len();
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "paired test needs at least 2 pairs, got {n}"
        )));
    }
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mean = diffs.iter().sum::<f64>() / n as f64;
    let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let df = n - 1;
    if var == 0.0 {
        if mean == 0.0 {
            return Err(Error::DegenerateVariance);
        }
        return Ok(TTest {
            t: f64::INFINITY.copysign(mean),
            df,
            p: 0.0,
        });
    }
    let t = mean / (var / n as f64).sqrt();
    let dist = StudentsT::new(0.0, 1.0, df as f64)
        .expect("df >= 1 by construction");
    let p = 2.0 * (1.0 - dist.cdf(t.abs()));
    Ok(TTest { t, df, p })
}

/// N rows sampled uniformly from the unit sphere in dimension d, for
/// synthetic-batch diagnostics. Gaussian coordinates via Box-Muller, then
/// row normalization.
pub fn random_unit_rows(n: usize, d: usize, rng: &mut impl Rng) -> Array2<f64> {
    let mut rows = Array2::<f64>::zeros((n, d));
    for mut row in rows.rows_mut() {
        loop {
            for x in row.iter_mut() {
                let u1: f64 = 1.0 - rng.random::<f64>();
                let u2: f64 = rng.random::<f64>();
                *x = (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos();
            }
            let norm = row.dot(&row).sqrt();
            if norm > 0.0 {
                row.mapv_inplace(|x| x / norm);
                break;
            }
        }
    }
    rows
}
