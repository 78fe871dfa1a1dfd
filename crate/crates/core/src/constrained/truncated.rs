//! Truncated-prior method: the Gaussian posterior of `f'(s)` restricted to
//! the nonnegative orthant.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};

use super::ConstrainedProblem;
use crate::error::Result;
use crate::sampling::{gibbs_truncated_mvn_precision, nuts_sample, NutsOptions, RngStream, SampleBatch, TargetDensity};

pub fn sample_truncated_gibbs(
    prob: &ConstrainedProblem,
    f_t: &DVector<f64>,
    n_samples: usize,
    burn_in: usize,
    rng: &RngStream,
) -> Result<SampleBatch> {
    let start = Instant::now();
    let (mean, prec) = prob.posterior_gaussian(f_t)?;
    let x0 = prob.constrained_mode(f_t)?;
    let mut batch = gibbs_truncated_mvn_precision(&mean, &prec, n_samples, burn_in, rng, Some(&x0))?;
    batch.method = "truncated-gibbs".into();
    batch.seconds = start.elapsed().as_secs_f64();
    Ok(batch)
}

/// Truncated Gaussian in log coordinates `y = exp(x)`, including the
/// log-Jacobian `Σ x`.
#[derive(Debug, Clone)]
pub struct LogTruncatedDensity {
    pub mean: DVector<f64>,
    pub precision: DMatrix<f64>,
}

impl TargetDensity for LogTruncatedDensity {
    fn dim(&self) -> usize {
        self.mean.len()
    }

    fn logpdf(&self, x: &DVector<f64>) -> f64 {
        self.logpdf_and_grad(x).0
    }

    fn logpdf_and_grad(&self, x: &DVector<f64>) -> (f64, DVector<f64>) {
        let y = x.map(f64::exp);
        let dev = &y - &self.mean;
        let pd = &self.precision * &dev;
        let lp = -0.5 * dev.dot(&pd) + x.sum();
        let grad = (-pd).component_mul(&y).add_scalar(1.0);
        if lp.is_nan() {
            return (f64::NEG_INFINITY, grad);
        }
        (lp, grad)
    }
}

pub fn sample_truncated_nuts(
    prob: &ConstrainedProblem,
    f_t: &DVector<f64>,
    n_samples: usize,
    burn_in: usize,
    rng: &RngStream,
    opts: &NutsOptions,
) -> Result<SampleBatch> {
    let start = Instant::now();
    let (mean, precision) = prob.posterior_gaussian(f_t)?;
    let mode = prob.constrained_mode(f_t)?;
    // start at the mode, lifted off the boundary by a fraction of the
    // conditional standard deviation
    let x0 = DVector::from_fn(mode.len(), |i, _| {
        let floor = 0.1 / precision[(i, i)].sqrt();
        mode[i].max(floor).ln()
    });
    let target = LogTruncatedDensity { mean, precision };
    let mut batch = nuts_sample(&target, &x0, n_samples, burn_in, rng, opts)?;
    batch.draws.apply(|v| *v = v.exp());
    batch.method = "truncated-nuts".into();
    batch.seconds = start.elapsed().as_secs_f64();
    Ok(batch)
}
