use nalgebra::{DMatrix, DVector};

use super::VirtualDesign;
use crate::error::{Error, Result};
use crate::gp::GpModel;
use crate::kernels::{cov_block, cov_self, DerivSpec};
use crate::linalg::{cholesky_jittered, solve_lower, solve_lower_vec, symmetrize, Chol};
use crate::sampling::{solve_quadratic, Bounds, Quadratic, SolverOptions};

/// The linear-Gaussian model `f(t) | f'(s) ~ N(A f'(s), Σ*)` with prior
/// `f'(s) ~ N(0, K11)`, factorized for repeated use.
#[derive(Debug, Clone)]
pub struct ConstrainedProblem {
    pub model: GpModel,
    pub design: VirtualDesign,
    /// `K01(t,s) K11⁻¹`, n×m.
    pub a: DMatrix<f64>,
    /// `K(t,t) − K01 K11⁻¹ K10` plus nugget and jitter.
    pub sigma_star: DMatrix<f64>,
    /// Jittered derivative prior covariance.
    pub k11: DMatrix<f64>,
    pub(crate) chol_sigma: Chol,
    pub(crate) chol_k11: Chol,
    /// `L_Σ⁻¹ A`.
    pub(crate) a_white: DMatrix<f64>,
    /// `Aᵀ Σ*⁻¹ A`.
    pub(crate) gram: DMatrix<f64>,
    /// `K11⁻¹`.
    pub(crate) prior_precision: DMatrix<f64>,
}

pub fn build_problem(model: &GpModel, design: &VirtualDesign) -> Result<ConstrainedProblem> {
    let p = &model.params;
    let t = &model.data.inputs;
    if design.points.ncols() != t.ncols() {
        return Err(Error::arg("virtual points and training inputs differ in dimension"));
    }
    let tspec = vec![DerivSpec::Value; t.nrows()];
    let mut k11 = cov_self(&design.points, &design.specs, p)?;
    for i in 0..k11.nrows() {
        k11[(i, i)] += p.jitter();
    }
    let chol_k11 = cholesky_jittered(k11.clone(), 0.0, "derivative prior covariance")?;
    let k01 = cov_block(t, &tspec, &design.points, &design.specs, p)?;
    // A = K01 K11⁻¹ = (K11⁻¹ K10)ᵀ
    let a = chol_k11.solve(&k01.transpose()).transpose();
    let v = solve_lower(&chol_k11, &k01.transpose());
    let mut sigma_star = cov_self(t, &tspec, p)? - v.transpose() * v;
    symmetrize(&mut sigma_star);
    for i in 0..sigma_star.nrows() {
        sigma_star[(i, i)] += p.jitter() + model.nugget;
    }
    let chol_sigma = cholesky_jittered(sigma_star.clone(), 0.0, "conditional value covariance")?;
    let a_white = solve_lower(&chol_sigma, &a);
    let mut gram = a_white.transpose() * &a_white;
    symmetrize(&mut gram);
    let mut prior_precision = chol_k11.inverse();
    symmetrize(&mut prior_precision);
    Ok(ConstrainedProblem {
        model: model.clone(),
        design: design.clone(),
        a,
        sigma_star,
        k11,
        chol_sigma,
        chol_k11,
        a_white,
        gram,
        prior_precision,
    })
}

impl ConstrainedProblem {
    pub fn n_obs(&self) -> usize {
        self.a.nrows()
    }

    pub fn n_virtual(&self) -> usize {
        self.a.ncols()
    }

    pub(crate) fn check_values(&self, f_t: &DVector<f64>) -> Result<()> {
        if f_t.len() != self.n_obs() {
            return Err(Error::arg(format!(
                "expected {} training values, got {}",
                self.n_obs(),
                f_t.len()
            )));
        }
        Ok(())
    }

    /// `Aᵀ Σ*⁻¹ (f − μ)`.
    pub fn data_term(&self, f_t: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_values(f_t)?;
        let r = f_t.add_scalar(-self.model.mean_const);
        Ok(self.a_white.transpose() * solve_lower_vec(&self.chol_sigma, &r))
    }

    /// Precision `AᵀΣ*⁻¹A + K11⁻¹` of the untruncated posterior.
    pub fn posterior_precision(&self) -> DMatrix<f64> {
        let mut h = &self.gram + &self.prior_precision;
        symmetrize(&mut h);
        h
    }

    /// Mean and precision of the untruncated Gaussian posterior of `f'(s)`.
    pub fn posterior_gaussian(&self, f_t: &DVector<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
        let h = self.data_term(f_t)?;
        let prec = self.posterior_precision();
        let chol = cholesky_jittered(prec.clone(), 0.0, "posterior precision")?;
        Ok((chol.solve(&h), prec))
    }

    /// Mode of the posterior truncated to the nonnegative orthant.
    pub fn constrained_mode(&self, f_t: &DVector<f64>) -> Result<DVector<f64>> {
        let q = Quadratic {
            hessian: self.posterior_precision(),
            linear: self.data_term(f_t)?,
            bounds: Bounds::NonNegative,
        };
        Ok(solve_quadratic(&q, &DVector::zeros(self.n_virtual()), &SolverOptions::default()).x)
    }
}
