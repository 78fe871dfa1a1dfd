//! Generic samplers and solvers.

mod bounded_lsq;
mod gibbs;
mod nuts;
mod rng;
mod truncnorm;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

pub use bounded_lsq::{
    solve_bounded_lsq, solve_quadratic, Bounds, BoundedLsqProblem, LsqSolution, Quadratic,
    SolverOptions,
};
pub use gibbs::{gibbs_truncated_mvn, gibbs_truncated_mvn_precision};
pub use nuts::{nuts_sample, NutsOptions};
pub use rng::RngStream;
pub use truncnorm::{
    log_norm_cdf, norm_cdf, norm_isf, norm_logpdf, norm_sf, sample_truncnorm_lower,
    sample_truncnorm_upper,
};

/// A log density with gradient.
pub trait TargetDensity: Sync {
    fn dim(&self) -> usize;

    /// Log density, `-∞` outside the support.
    fn logpdf(&self, x: &DVector<f64>) -> f64;

    /// Log density and its gradient together.
    fn logpdf_and_grad(&self, x: &DVector<f64>) -> (f64, DVector<f64>);

    fn grad_logpdf(&self, x: &DVector<f64>) -> DVector<f64> {
        self.logpdf_and_grad(x).1
    }
}

/// Post-burn-in draws of a sampler plus provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleBatch {
    /// One draw per row.
    pub draws: DMatrix<f64>,
    pub method: String,
    pub seconds: f64,
    pub burn_in: usize,
    /// Draws whose solver hit its iteration cap.
    pub degraded: usize,
    pub seed: u64,
    /// Mean acceptance statistic (NUTS only).
    pub accept_rate: Option<f64>,
    /// Divergent transitions, burn-in included (NUTS only).
    pub divergences: usize,
    /// Set when divergences exceed half of the burn-in.
    pub divergence_flag: bool,
    pub step_size: Option<f64>,
}

impl SampleBatch {
    pub fn new(draws: DMatrix<f64>, method: &str, seed: u64) -> Self {
        SampleBatch {
            draws,
            method: method.to_string(),
            seconds: 0.0,
            burn_in: 0,
            degraded: 0,
            seed,
            accept_rate: None,
            divergences: 0,
            divergence_flag: false,
            step_size: None,
        }
    }

    pub fn len(&self) -> usize {
        self.draws.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.draws.ncols()
    }
}
