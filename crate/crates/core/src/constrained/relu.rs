//! ReLU-likelihood method: the likelihood sees `max(f'(s), 0)`, the
//! Gaussian prior acts on the raw values.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use super::ConstrainedProblem;
use crate::error::{Error, Result};
use crate::sampling::{
    log_norm_cdf, nuts_sample, sample_truncnorm_lower, sample_truncnorm_upper, NutsOptions, RngStream,
    SampleBatch, TargetDensity,
};

/// `log π(x) = −½ rᵀ G r + rᵀ h − ½ xᵀ Q x` with `r = relu(x)`.
#[derive(Debug, Clone)]
pub struct ReluDensity {
    /// Likelihood precision in derivative space, `AᵀΣ*⁻¹A`.
    pub gram: DMatrix<f64>,
    /// `AᵀΣ*⁻¹(f − μ)`.
    pub data: DVector<f64>,
    /// Prior precision `K11⁻¹`.
    pub prior_precision: DMatrix<f64>,
}

impl ReluDensity {
    pub fn new(prob: &ConstrainedProblem, f_t: &DVector<f64>) -> Result<Self> {
        Ok(ReluDensity {
            gram: prob.gram.clone(),
            data: prob.data_term(f_t)?,
            prior_precision: prob.prior_precision.clone(),
        })
    }
}

fn relu(x: &DVector<f64>) -> DVector<f64> {
    x.map(|v| v.max(0.0))
}

impl TargetDensity for ReluDensity {
    fn dim(&self) -> usize {
        self.data.len()
    }

    fn logpdf(&self, x: &DVector<f64>) -> f64 {
        let r = relu(x);
        -0.5 * r.dot(&(&self.gram * &r)) + r.dot(&self.data) - 0.5 * x.dot(&(&self.prior_precision * x))
    }

    fn logpdf_and_grad(&self, x: &DVector<f64>) -> (f64, DVector<f64>) {
        let r = relu(x);
        let gr = &self.gram * &r;
        let qx = &self.prior_precision * x;
        let lp = -0.5 * r.dot(&gr) + r.dot(&self.data) - 0.5 * x.dot(&qx);
        // subgradient 0 at the kink
        let mut grad = &self.data - gr;
        for (g, &xi) in grad.iter_mut().zip(x.iter()) {
            if xi <= 0.0 {
                *g = 0.0;
            }
        }
        (lp, grad - qx)
    }
}

/// Log normalizing masses of the two pieces of a full conditional: the
/// negative piece `exp(−½ a₋ x² + b₋ x)` on `x < 0` and the positive piece
/// `exp(−½ a₊ x² + b₊ x)` on `x ≥ 0`.
pub(crate) fn piece_log_masses(a_neg: f64, b_neg: f64, a_pos: f64, b_pos: f64) -> (f64, f64) {
    let half_log_2pi = 0.5 * (2.0 * std::f64::consts::PI).ln();
    let neg = b_neg * b_neg / (2.0 * a_neg) + half_log_2pi - 0.5 * a_neg.ln() + log_norm_cdf(-b_neg / a_neg.sqrt());
    let pos = b_pos * b_pos / (2.0 * a_pos) + half_log_2pi - 0.5 * a_pos.ln() + log_norm_cdf(b_pos / a_pos.sqrt());
    (neg, pos)
}

pub fn sample_relu_gibbs(
    prob: &ConstrainedProblem,
    f_t: &DVector<f64>,
    n_samples: usize,
    burn_in: usize,
    rng: &RngStream,
) -> Result<SampleBatch> {
    if n_samples <= burn_in {
        return Err(Error::arg("n_samples must exceed burn_in"));
    }
    let start = Instant::now();
    let target = ReluDensity::new(prob, f_t)?;
    let (g, h, q) = (&target.gram, &target.data, &target.prior_precision);
    let m = h.len();
    let mut r = rng.rng();
    let mut x = prob.constrained_mode(f_t)?;
    let kept = n_samples - burn_in;
    let mut draws = DMatrix::zeros(kept, m);
    for sweep in 0..n_samples {
        // refreshed every sweep to avoid drift from the O(m) updates
        let mut qx = q * &x;
        let mut gr = g * relu(&x);
        for i in 0..m {
            let xi = x[i];
            let ri = xi.max(0.0);
            let a_neg = q[(i, i)];
            let b_neg = -(qx[i] - a_neg * xi);
            let a_pos = a_neg + g[(i, i)];
            let b_pos = b_neg - (gr[i] - g[(i, i)] * ri) + h[i];
            let (lm_neg, lm_pos) = piece_log_masses(a_neg, b_neg, a_pos, b_pos);
            let p_neg = 1.0 / (1.0 + (lm_pos - lm_neg).exp());
            let new = if r.random::<f64>() < p_neg {
                sample_truncnorm_upper(b_neg / a_neg, a_neg.powf(-0.5), 0.0, &mut r)
            } else {
                sample_truncnorm_lower(b_pos / a_pos, a_pos.powf(-0.5), 0.0, &mut r)
            };
            let dx = new - xi;
            let dr = new.max(0.0) - ri;
            if dx != 0.0 {
                qx.axpy(dx, &q.column(i), 1.0);
            }
            if dr != 0.0 {
                gr.axpy(dr, &g.column(i), 1.0);
            }
            x[i] = new;
        }
        if sweep >= burn_in {
            draws.row_mut(sweep - burn_in).tr_copy_from(&x);
        }
    }
    let mut batch = SampleBatch::new(draws, "relu-gibbs", rng.seed);
    batch.burn_in = burn_in;
    batch.seconds = start.elapsed().as_secs_f64();
    Ok(batch)
}

pub fn sample_relu_nuts(
    prob: &ConstrainedProblem,
    f_t: &DVector<f64>,
    n_samples: usize,
    burn_in: usize,
    rng: &RngStream,
    opts: &NutsOptions,
) -> Result<SampleBatch> {
    let start = Instant::now();
    let target = ReluDensity::new(prob, f_t)?;
    let x0 = prob.constrained_mode(f_t)?;
    let mut batch = nuts_sample(&target, &x0, n_samples, burn_in, rng, opts)?;
    batch.method = "relu-nuts".into();
    batch.seconds = start.elapsed().as_secs_f64();
    Ok(batch)
}
