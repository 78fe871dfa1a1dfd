//! Squared-exponential kernel with ARD lengthscales and its first/second
//! cross-derivatives.
//!
//! With `r_j = x_j - y_j`:
//!
//! ```text
//! k(x, y)          = σ² exp(-Σ_j r_j² / (2 l_j²))
//! ∂k/∂y_j          = k r_j / l_j²
//! ∂k/∂x_j          = -k r_j / l_j²
//! ∂²k/∂x_i∂y_j     = k (δ_ij / l_j² - r_i r_j / (l_i² l_j²))
//! ```

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Squared-exponential hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    variance: f64,
    lengthscales: Vec<f64>,
}

impl KernelParams {
    pub fn new(variance: f64, lengthscales: Vec<f64>) -> Result<Self> {
        if !(variance > 0.0 && variance.is_finite()) {
            return Err(Error::arg(format!("kernel variance must be > 0, got {variance}")));
        }
        if lengthscales.is_empty() {
            return Err(Error::arg("at least one lengthscale is required"));
        }
        if let Some(l) = lengthscales.iter().find(|l| !(**l > 0.0 && l.is_finite())) {
            return Err(Error::arg(format!("lengthscales must be > 0, got {l}")));
        }
        Ok(KernelParams {
            variance,
            lengthscales,
        })
    }

    /// Isotropic parameters for `dim` input dimensions.
    pub fn isotropic(variance: f64, lengthscale: f64, dim: usize) -> Result<Self> {
        Self::new(variance, vec![lengthscale; dim])
    }

    pub fn variance(&self) -> f64 {
        self.variance
    }

    pub fn lengthscales(&self) -> &[f64] {
        &self.lengthscales
    }

    pub fn dim(&self) -> usize {
        self.lengthscales.len()
    }

    /// Log-parameter vector `(log σ², log l_1, ..., log l_d)`.
    pub fn to_log(&self) -> Vec<f64> {
        std::iter::once(self.variance.ln())
            .chain(self.lengthscales.iter().map(|l| l.ln()))
            .collect()
    }

    pub fn from_log(theta: &[f64]) -> Result<Self> {
        if theta.len() < 2 {
            return Err(Error::arg("log-parameter vector needs at least two entries"));
        }
        Self::new(theta[0].exp(), theta[1..].iter().map(|t| t.exp()).collect())
    }

    /// Diagonal jitter used for every matrix built with these parameters.
    pub fn jitter(&self) -> f64 {
        crate::linalg::JITTER * self.variance
    }

    pub(crate) fn check_dim(&self, d: usize) -> Result<()> {
        if d != self.dim() {
            return Err(Error::arg(format!(
                "point dimension {d} does not match {} lengthscales",
                self.dim()
            )));
        }
        Ok(())
    }
}

/// What is observed at a point: the function value or a first partial
/// derivative along one input coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DerivSpec {
    Value,
    Partial(usize),
}

impl DerivSpec {
    pub fn order(&self) -> usize {
        match self {
            DerivSpec::Value => 0,
            DerivSpec::Partial(_) => 1,
        }
    }

    fn check(&self, d: usize) -> Result<()> {
        match *self {
            DerivSpec::Partial(j) if j >= d => Err(Error::arg(format!(
                "derivative dimension {j} out of range for d = {d}"
            ))),
            _ => Ok(()),
        }
    }
}

fn check_pair(x: &[f64], y: &[f64], p: &KernelParams) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::arg(format!(
            "points have different dimensions ({} vs {})",
            x.len(),
            y.len()
        )));
    }
    p.check_dim(x.len())
}

fn check_index(j: usize, p: &KernelParams) -> Result<()> {
    if j >= p.dim() {
        return Err(Error::arg(format!("dimension index {j} out of range for d = {}", p.dim())));
    }
    Ok(())
}

#[inline]
fn k_unchecked(x: &[f64], y: &[f64], p: &KernelParams) -> f64 {
    let mut q = 0.0;
    for ((a, b), l) in x.iter().zip(y).zip(&p.lengthscales) {
        let r = (a - b) / l;
        q += r * r;
    }
    p.variance * (-0.5 * q).exp()
}

#[inline]
fn k01_unchecked(x: &[f64], y: &[f64], j: usize, p: &KernelParams) -> f64 {
    let l2 = p.lengthscales[j] * p.lengthscales[j];
    k_unchecked(x, y, p) * (x[j] - y[j]) / l2
}

#[inline]
fn k11_unchecked(x: &[f64], y: &[f64], i: usize, j: usize, p: &KernelParams) -> f64 {
    let li2 = p.lengthscales[i] * p.lengthscales[i];
    let lj2 = p.lengthscales[j] * p.lengthscales[j];
    let delta = if i == j { 1.0 / lj2 } else { 0.0 };
    k_unchecked(x, y, p) * (delta - (x[i] - y[i]) * (x[j] - y[j]) / (li2 * lj2))
}

/// Kernel value `k(x, y)`.
pub fn k(x: &[f64], y: &[f64], p: &KernelParams) -> Result<f64> {
    check_pair(x, y, p)?;
    Ok(k_unchecked(x, y, p))
}

/// `∂k/∂y_j`.
pub fn k01(x: &[f64], y: &[f64], j: usize, p: &KernelParams) -> Result<f64> {
    check_pair(x, y, p)?;
    check_index(j, p)?;
    Ok(k01_unchecked(x, y, j, p))
}

/// `∂k/∂x_j`; shares its expression with [`k01`] so `k10 + k01 == 0` exactly.
pub fn k10(x: &[f64], y: &[f64], j: usize, p: &KernelParams) -> Result<f64> {
    Ok(-k01(x, y, j, p)?)
}

/// `∂²k/∂x_j∂y_j`.
pub fn k11(x: &[f64], y: &[f64], j: usize, p: &KernelParams) -> Result<f64> {
    k11_mixed(x, y, j, j, p)
}

/// `∂²k/∂x_i∂y_j`, needed when virtual points constrain different directions.
pub fn k11_mixed(x: &[f64], y: &[f64], i: usize, j: usize, p: &KernelParams) -> Result<f64> {
    check_pair(x, y, p)?;
    check_index(i, p)?;
    check_index(j, p)?;
    Ok(k11_unchecked(x, y, i, j, p))
}

#[inline]
pub(crate) fn entry(x: &[f64], sx: DerivSpec, y: &[f64], sy: DerivSpec, p: &KernelParams) -> f64 {
    match (sx, sy) {
        (DerivSpec::Value, DerivSpec::Value) => k_unchecked(x, y, p),
        (DerivSpec::Value, DerivSpec::Partial(j)) => k01_unchecked(x, y, j, p),
        (DerivSpec::Partial(i), DerivSpec::Value) => -k01_unchecked(x, y, i, p),
        (DerivSpec::Partial(i), DerivSpec::Partial(j)) => k11_unchecked(x, y, i, j, p),
    }
}

/// Covariance block between observations at the rows of `x` (with specs `sx`)
/// and the rows of `y` (with specs `sy`).
pub fn cov_block(
    x: &DMatrix<f64>,
    sx: &[DerivSpec],
    y: &DMatrix<f64>,
    sy: &[DerivSpec],
    p: &KernelParams,
) -> Result<DMatrix<f64>> {
    if x.nrows() != sx.len() || y.nrows() != sy.len() {
        return Err(Error::arg(format!(
            "spec count mismatch: {} points / {} specs and {} points / {} specs",
            x.nrows(),
            sx.len(),
            y.nrows(),
            sy.len()
        )));
    }
    if x.nrows() > 0 {
        p.check_dim(x.ncols())?;
    }
    if y.nrows() > 0 {
        p.check_dim(y.ncols())?;
    }
    let d = p.dim();
    for s in sx.iter().chain(sy) {
        s.check(d)?;
    }
    let xr = rows(x);
    let yr = rows(y);
    Ok(DMatrix::from_fn(x.nrows(), y.nrows(), |i, r| {
        entry(&xr[i], sx[i], &yr[r], sy[r], p)
    }))
}

/// Symmetric covariance of a set of observations with itself.
pub fn cov_self(x: &DMatrix<f64>, sx: &[DerivSpec], p: &KernelParams) -> Result<DMatrix<f64>> {
    let mut m = cov_block(x, sx, x, sx, p)?;
    crate::linalg::symmetrize(&mut m);
    Ok(m)
}

/// Row-major copies of the points, for contiguous slice access.
pub(crate) fn rows(x: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..x.nrows())
        .map(|i| x.row(i).iter().copied().collect())
        .collect()
}
