//! Monotonicity-constrained posteriors over derivative values at virtual
//! points, and the push-forward to function values.

mod predict;
mod problem;
mod relu;
mod rlrto;
mod truncated;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::design::DomainBox;
use crate::error::{Error, Result};
use crate::kernels::DerivSpec;

pub use predict::{
    constrained_derivatives, predict_constrained, summarize_constrained, summarize_unconstrained,
    ConstrainedPrediction, DrawMode, PredictOptions, ValueSummary,
};
pub use problem::{build_problem, ConstrainedProblem};
pub use relu::{sample_relu_gibbs, sample_relu_nuts, ReluDensity};
pub use rlrto::{sample_rlrto, RlrtoOptions};
pub use truncated::{sample_truncated_gibbs, sample_truncated_nuts, LogTruncatedDensity};

/// Virtual points and the input dimension constrained at each of them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VirtualDesign {
    pub points: DMatrix<f64>,
    pub specs: Vec<DerivSpec>,
}

impl VirtualDesign {
    pub fn new(points: DMatrix<f64>, specs: Vec<DerivSpec>) -> Result<Self> {
        if points.nrows() == 0 {
            return Err(Error::arg("a virtual design needs at least one point"));
        }
        if specs.len() != points.nrows() {
            return Err(Error::arg("one derivative spec per virtual point is required"));
        }
        if specs.iter().any(|s| match s {
            DerivSpec::Value => true,
            DerivSpec::Partial(j) => *j >= points.ncols(),
        }) {
            return Err(Error::arg("virtual points must constrain a valid first derivative"));
        }
        Ok(VirtualDesign { points, specs })
    }

    /// Constrain dimensions in round-robin order over `dims`.
    pub fn round_robin(points: DMatrix<f64>, dims: &[usize]) -> Result<Self> {
        if dims.is_empty() {
            return Err(Error::arg("no constrained dimensions given"));
        }
        let specs = (0..points.nrows()).map(|i| DerivSpec::Partial(dims[i % dims.len()])).collect();
        VirtualDesign::new(points, specs)
    }

    pub fn len(&self) -> usize {
        self.specs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.specs.is_empty()
    }

    pub fn inside(&self, domain: &DomainBox) -> bool {
        (0..self.points.nrows()).all(|i| {
            let row: Vec<f64> = self.points.row(i).iter().copied().collect();
            domain.contains(&row)
        })
    }
}
