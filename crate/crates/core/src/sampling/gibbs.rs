use std::time::Instant;

use nalgebra::{DMatrix, DVector};

use super::{sample_truncnorm_lower, RngStream, SampleBatch};
use crate::error::{Error, Result};
use crate::linalg::cholesky_jittered;

/// Component-wise Gibbs sampler for `N(mean, cov)` truncated to the
/// nonnegative orthant. `n_samples` counts all sweeps, the first `burn_in`
/// of which are discarded.
pub fn gibbs_truncated_mvn(
    mean: &DVector<f64>,
    cov: &DMatrix<f64>,
    n_samples: usize,
    burn_in: usize,
    rng: &RngStream,
    x0: Option<&DVector<f64>>,
) -> Result<SampleBatch> {
    if cov.nrows() != mean.len() || cov.ncols() != mean.len() {
        return Err(Error::arg("covariance shape does not match the mean"));
    }
    let chol = cholesky_jittered(cov.clone(), 0.0, "truncated normal covariance")?;
    gibbs_truncated_mvn_precision(mean, &chol.inverse(), n_samples, burn_in, rng, x0)
}

/// As [`gibbs_truncated_mvn`], parameterized by the precision matrix.
pub fn gibbs_truncated_mvn_precision(
    mean: &DVector<f64>,
    precision: &DMatrix<f64>,
    n_samples: usize,
    burn_in: usize,
    rng: &RngStream,
    x0: Option<&DVector<f64>>,
) -> Result<SampleBatch> {
    let m = mean.len();
    if precision.nrows() != m || precision.ncols() != m {
        return Err(Error::arg("precision shape does not match the mean"));
    }
    if n_samples <= burn_in {
        return Err(Error::arg("n_samples must exceed burn_in"));
    }
    if (0..m).any(|i| !(precision[(i, i)] > 0.0)) {
        return Err(Error::Numerical("precision has a nonpositive diagonal".into()));
    }
    let start = Instant::now();
    let mut r = rng.rng();
    let sd: Vec<f64> = (0..m).map(|i| precision[(i, i)].powf(-0.5)).collect();
    let mut x = match x0 {
        Some(v) if v.len() == m => v.map(|a| a.max(0.0)),
        Some(_) => return Err(Error::arg("initial state has the wrong length")),
        None => mean.map(|a| a.max(0.0)),
    };
    // residual from the mean, kept in sync with x
    let mut dev = &x - mean;
    let kept = n_samples - burn_in;
    let mut draws = DMatrix::zeros(kept, m);
    for sweep in 0..n_samples {
        for i in 0..m {
            let row = precision.column(i);
            let dot = row.dot(&dev) - precision[(i, i)] * dev[i];
            let mu = mean[i] - dot / precision[(i, i)];
            let xi = sample_truncnorm_lower(mu, sd[i], 0.0, &mut r);
            x[i] = xi;
            dev[i] = xi - mean[i];
        }
        if sweep >= burn_in {
            draws.row_mut(sweep - burn_in).tr_copy_from(&x);
        }
    }
    let mut batch = SampleBatch::new(draws, "truncated-gibbs", rng.seed);
    batch.burn_in = burn_in;
    batch.seconds = start.elapsed().as_secs_f64();
    Ok(batch)
}
