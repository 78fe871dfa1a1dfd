//! Derivative-free and derivative-enhanced GP conditioning, log marginal
//! likelihood and hyperparameter fitting.
//!
//! Every conditioning operation goes through [`Conditioner`], which holds the
//! Cholesky factor of the (jittered) covariance of a set of value and/or
//! derivative observations. Means are constant for values and zero for
//! derivatives.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{cov_block, cov_self, DerivSpec, KernelParams};
use crate::linalg::{cholesky_jittered, log_det, solve_lower, symmetrize, Chol};

/// Training inputs (one point per row) and observed values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub inputs: DMatrix<f64>,
    pub values: DVector<f64>,
    /// Standard deviation of the noise used when the data was generated.
    pub noise_sd: f64,
}

impl Dataset {
    pub fn new(inputs: DMatrix<f64>, values: DVector<f64>, noise_sd: f64) -> Result<Self> {
        if inputs.nrows() != values.len() {
            return Err(Error::arg(format!(
                "{} input rows but {} values",
                inputs.nrows(),
                values.len()
            )));
        }
        if inputs.nrows() == 0 {
            return Err(Error::arg("dataset needs at least one observation"));
        }
        if !(noise_sd >= 0.0) {
            return Err(Error::arg("noise_sd must be nonnegative"));
        }
        Ok(Dataset {
            inputs,
            values,
            noise_sd,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.inputs.ncols()
    }

    pub fn value_specs(&self) -> Vec<DerivSpec> {
        vec![DerivSpec::Value; self.len()]
    }
}

/// Mean vector and covariance matrix of a Gaussian prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPrediction {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl GaussianPrediction {
    /// Diagonal of the covariance, with round-off negatives clamped to zero.
    pub fn variances(&self) -> DVector<f64> {
        self.cov.diagonal().map(|v| v.max(0.0))
    }
}

/// Factorized covariance of a set of observations, ready for conditioning.
#[derive(Debug, Clone)]
pub struct Conditioner {
    params: KernelParams,
    mean_const: f64,
    points: DMatrix<f64>,
    specs: Vec<DerivSpec>,
    chol: Chol,
}

/// Affine map from observation values to the conditional mean at a set of
/// targets, plus the (value-independent) conditional covariance.
#[derive(Debug, Clone)]
pub struct LinearPredictor {
    /// `targets × observations` gain matrix.
    pub gain: DMatrix<f64>,
    /// Prior mean at the targets.
    pub prior_mean: DVector<f64>,
    /// Prior mean of each observation.
    pub obs_mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl LinearPredictor {
    pub fn mean(&self, obs: &DVector<f64>) -> DVector<f64> {
        &self.prior_mean + &self.gain * (obs - &self.obs_mean)
    }
}

fn prior_means(specs: &[DerivSpec], mean_const: f64) -> DVector<f64> {
    DVector::from_iterator(
        specs.len(),
        specs.iter().map(|s| match s {
            DerivSpec::Value => mean_const,
            DerivSpec::Partial(_) => 0.0,
        }),
    )
}

impl Conditioner {
    pub fn new(
        params: &KernelParams,
        mean_const: f64,
        points: DMatrix<f64>,
        specs: Vec<DerivSpec>,
    ) -> Result<Self> {
        Conditioner::with_diagonal(params, mean_const, points, specs, &[])
    }

    /// As [`Conditioner::new`], with `extra[i]` added to the variance of
    /// observation `i` (missing entries count as zero).
    pub fn with_diagonal(
        params: &KernelParams,
        mean_const: f64,
        points: DMatrix<f64>,
        specs: Vec<DerivSpec>,
        extra: &[f64],
    ) -> Result<Self> {
        if extra.len() > specs.len() {
            return Err(Error::arg("more diagonal terms than observations"));
        }
        let mut k = cov_self(&points, &specs, params)?;
        for (i, e) in extra.iter().enumerate() {
            k[(i, i)] += e;
        }
        let chol = cholesky_jittered(k, params.jitter(), "observation covariance")?;
        Ok(Conditioner {
            params: params.clone(),
            mean_const,
            points,
            specs,
            chol,
        })
    }

    pub fn len(&self) -> usize {
        self.specs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.specs.is_empty()
    }

    pub fn chol(&self) -> &Chol {
        &self.chol
    }

    /// Build the gain and conditional covariance for the given targets.
    pub fn linear_predictor(
        &self,
        targets: &DMatrix<f64>,
        target_specs: &[DerivSpec],
    ) -> Result<LinearPredictor> {
        let cross = cov_block(&self.points, &self.specs, targets, target_specs, &self.params)?;
        let v = solve_lower(&self.chol, &cross);
        let gain = self
            .chol
            .l_dirty()
            .tr_solve_lower_triangular(&v)
            .expect("positive diagonal")
            .transpose();
        let mut cov = cov_self(targets, target_specs, &self.params)? - v.transpose() * &v;
        symmetrize(&mut cov);
        Ok(LinearPredictor {
            gain,
            prior_mean: prior_means(target_specs, self.mean_const),
            obs_mean: prior_means(&self.specs, self.mean_const),
            cov,
        })
    }

    /// Condition targets on observed values.
    pub fn predict(
        &self,
        obs: &DVector<f64>,
        targets: &DMatrix<f64>,
        target_specs: &[DerivSpec],
    ) -> Result<GaussianPrediction> {
        if obs.len() != self.len() {
            return Err(Error::arg(format!(
                "expected {} observation values, got {}",
                self.len(),
                obs.len()
            )));
        }
        let lp = self.linear_predictor(targets, target_specs)?;
        Ok(GaussianPrediction {
            mean: lp.mean(obs),
            cov: lp.cov,
        })
    }
}

/// A GP with fixed hyperparameters conditioned on a dataset.
#[derive(Debug, Clone)]
pub struct GpModel {
    pub params: KernelParams,
    pub mean_const: f64,
    pub data: Dataset,
    /// Fixed variance added to each training value (0 for the
    /// interpolating model).
    pub nugget: f64,
    cond: Conditioner,
}

impl GpModel {
    pub fn new(params: KernelParams, mean_const: f64, data: Dataset) -> Result<Self> {
        GpModel::with_nugget(params, mean_const, data, 0.0)
    }

    /// Model whose training values carry independent noise of variance
    /// `nugget`; predictions are of the latent function.
    pub fn with_nugget(params: KernelParams, mean_const: f64, data: Dataset, nugget: f64) -> Result<Self> {
        params.check_dim(data.dim())?;
        if !(nugget >= 0.0 && nugget.is_finite()) {
            return Err(Error::arg(format!("nugget must be finite and nonnegative, got {nugget}")));
        }
        let cond = Conditioner::with_diagonal(
            &params,
            mean_const,
            data.inputs.clone(),
            data.value_specs(),
            &vec![nugget; data.len()],
        )?;
        Ok(GpModel {
            params,
            mean_const,
            data,
            nugget,
            cond,
        })
    }

    /// Diagonal terms of the training block, for conditioners that stack
    /// training values first.
    pub fn training_diagonal(&self) -> Vec<f64> {
        vec![self.nugget; self.data.len()]
    }

    /// Lower Cholesky factor of `K(t,t) + nugget + jitter`.
    pub fn chol_ktt(&self) -> &Chol {
        self.cond.chol()
    }

    pub fn conditioner(&self) -> &Conditioner {
        &self.cond
    }

    /// Posterior of `f(u)` given the training values.
    pub fn posterior_value(&self, u: &DMatrix<f64>) -> Result<GaussianPrediction> {
        if u.nrows() == 0 {
            return Ok(GaussianPrediction {
                mean: DVector::zeros(0),
                cov: DMatrix::zeros(0, 0),
            });
        }
        self.cond.predict(&self.data.values, u, &vec![DerivSpec::Value; u.nrows()])
    }

    /// Posterior of `f(u)` given the training values and derivative values
    /// `fprime` observed at `s` (one spec per row of `s`).
    pub fn predict_enhanced(
        &self,
        s: &DMatrix<f64>,
        s_specs: &[DerivSpec],
        fprime: &DVector<f64>,
        u: &DMatrix<f64>,
    ) -> Result<GaussianPrediction> {
        if s.nrows() == 0 {
            return self.posterior_value(u);
        }
        let (cond, obs) = self.enhanced_conditioner(s, s_specs, fprime)?;
        cond.predict(&obs, u, &vec![DerivSpec::Value; u.nrows()])
    }

    /// Conditioner over the stacked `[f(t); f'(s)]` observations, with the
    /// stacked observation vector.
    pub fn enhanced_conditioner(
        &self,
        s: &DMatrix<f64>,
        s_specs: &[DerivSpec],
        fprime: &DVector<f64>,
    ) -> Result<(Conditioner, DVector<f64>)> {
        if fprime.len() != s.nrows() {
            return Err(Error::arg("fprime length must match the number of virtual points"));
        }
        if s.nrows() > 0 && s.ncols() != self.data.dim() {
            return Err(Error::arg("virtual points have the wrong dimension"));
        }
        let (points, specs) = stack(&self.data.inputs, &self.data.value_specs(), s, s_specs)?;
        let cond = Conditioner::with_diagonal(&self.params, self.mean_const, points, specs, &self.training_diagonal())?;
        let obs = DVector::from_iterator(
            self.data.len() + fprime.len(),
            self.data.values.iter().chain(fprime.iter()).copied(),
        );
        Ok((cond, obs))
    }

    pub fn log_marginal_likelihood(&self) -> f64 {
        let r = self.data.values.add_scalar(-self.mean_const);
        lml_from_chol(self.chol_ktt(), &r)
    }
}

/// Stack two point sets and their specs.
pub fn stack(
    a: &DMatrix<f64>,
    sa: &[DerivSpec],
    b: &DMatrix<f64>,
    sb: &[DerivSpec],
) -> Result<(DMatrix<f64>, Vec<DerivSpec>)> {
    if a.nrows() > 0 && b.nrows() > 0 && a.ncols() != b.ncols() {
        return Err(Error::arg("cannot stack point sets of different dimension"));
    }
    let d = if a.nrows() > 0 { a.ncols() } else { b.ncols() };
    let mut m = DMatrix::zeros(a.nrows() + b.nrows(), d);
    if a.nrows() > 0 {
        m.rows_mut(0, a.nrows()).copy_from(a);
    }
    if b.nrows() > 0 {
        m.rows_mut(a.nrows(), b.nrows()).copy_from(b);
    }
    Ok((m, sa.iter().chain(sb).copied().collect()))
}

/// Predict function values at `t` from derivative values `fprime` at `s`
/// (no value observations).
pub fn predict_values_from_derivs(
    params: &KernelParams,
    mean_const: f64,
    s: &DMatrix<f64>,
    s_specs: &[DerivSpec],
    fprime: &DVector<f64>,
    t: &DMatrix<f64>,
) -> Result<GaussianPrediction> {
    let cond = Conditioner::new(params, mean_const, s.clone(), s_specs.to_vec())?;
    cond.predict(fprime, t, &vec![DerivSpec::Value; t.nrows()])
}

fn lml_from_chol(chol: &Chol, r: &DVector<f64>) -> f64 {
    let w = crate::linalg::solve_lower_vec(chol, r);
    let n = r.len() as f64;
    -0.5 * w.norm_squared() - 0.5 * log_det(chol) - 0.5 * n * (2.0 * PI).ln()
}

/// Log marginal likelihood and its gradient with respect to
/// `(log σ², log l_1, ..., log l_d)`.
pub fn lml_and_gradient(
    data: &Dataset,
    params: &KernelParams,
    mean_const: f64,
) -> Result<(f64, Vec<f64>)> {
    lml_and_gradient_with_nugget(data, params, mean_const, 0.0)
}

/// As [`lml_and_gradient`] for values with fixed noise variance `nugget`
/// (held constant, so it has no gradient entry).
pub fn lml_and_gradient_with_nugget(
    data: &Dataset,
    params: &KernelParams,
    mean_const: f64,
    nugget: f64,
) -> Result<(f64, Vec<f64>)> {
    params.check_dim(data.dim())?;
    let specs = data.value_specs();
    let base = cov_self(&data.inputs, &specs, params)?;
    let mut noisy = base.clone();
    for i in 0..data.len() {
        noisy[(i, i)] += nugget;
    }
    let chol = cholesky_jittered(noisy, params.jitter(), "training covariance")?;
    let r = data.values.add_scalar(-mean_const);
    let lml = lml_from_chol(&chol, &r);
    let alpha = chol.solve(&r);
    let kinv = chol.inverse();
    // inner = ααᵀ − K⁻¹
    let inner = &alpha * alpha.transpose() - kinv;

    let n = data.len();
    let d = data.dim();
    let mut grad = vec![0.0; d + 1];
    // ∂K/∂log σ² = K (jitter scales with σ² as well)
    let mut kfull = base;
    for i in 0..n {
        kfull[(i, i)] += params.jitter();
    }
    grad[0] = 0.5 * inner.component_mul(&kfull).sum();
    for j in 0..d {
        let l2 = params.lengthscales()[j].powi(2);
        let mut acc = 0.0;
        for a in 0..n {
            for b in 0..n {
                let diff = data.inputs[(a, j)] - data.inputs[(b, j)];
                let dk = kfull[(a, b)] * diff * diff / l2;
                if a != b {
                    acc += inner[(a, b)] * dk;
                }
            }
        }
        grad[j + 1] = 0.5 * acc;
    }
    Ok((lml, grad))
}

/// Options for [`fit_hyperparameters`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub learning_rate: f64,
    pub max_iter: usize,
    pub grad_tol: f64,
    /// Largest change of any log-parameter in one iteration; larger steps
    /// are scaled down.
    pub max_step: f64,
    pub mean_const: f64,
    /// Fixed noise variance of the training values.
    pub nugget: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            learning_rate: 0.01,
            max_iter: 20_000,
            grad_tol: 1e-6,
            max_step: 0.1,
            mean_const: 0.0,
            nugget: 0.0,
        }
    }
}

/// Default starting point: `σ² = var(values)`, `l_j = range_j / 4`.
pub fn default_init(data: &Dataset) -> Result<KernelParams> {
    let n = data.len() as f64;
    let mean = data.values.mean();
    let var = data.values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let ls = (0..data.dim())
        .map(|j| {
            let col = data.inputs.column(j);
            let range = col.max() - col.min();
            if range > 0.0 {
                range / 4.0
            } else {
                1.0
            }
        })
        .collect();
    KernelParams::new(if var > 0.0 { var } else { 1.0 }, ls)
}

/// Gradient ascent on the log marginal likelihood in log-parameter space.
/// Returns the iterate with the highest likelihood seen.
///
/// Steps are `learning_rate * gradient`, clipped to `max_step` in the
/// infinity norm so that badly conditioned starting points do not overflow.
pub fn fit_hyperparameters(
    data: &Dataset,
    init: &KernelParams,
    opts: &FitOptions,
) -> Result<KernelParams> {
    if data.len() < 2 {
        return Err(Error::arg("hyperparameter fitting needs at least two observations"));
    }
    let (lml0, mut grad) = lml_and_gradient_with_nugget(data, init, opts.mean_const, opts.nugget)?;
    if !lml0.is_finite() {
        return Err(Error::arg("log marginal likelihood is not finite at the initial parameters"));
    }
    let mut theta = init.to_log();
    let mut best = (lml0, init.clone());
    for _ in 0..opts.max_iter {
        if grad.iter().all(|g| g.abs() < opts.grad_tol) {
            break;
        }
        let raw = grad.iter().fold(0.0f64, |a, g| a.max((opts.learning_rate * g).abs()));
        let scale = if raw > opts.max_step { opts.max_step / raw } else { 1.0 };
        for (t, g) in theta.iter_mut().zip(&grad) {
            *t += scale * opts.learning_rate * g;
        }
        let Ok(params) = KernelParams::from_log(&theta) else {
            break;
        };
        match lml_and_gradient_with_nugget(data, &params, opts.mean_const, opts.nugget) {
            Ok((lml, g)) if lml.is_finite() && g.iter().all(|v| v.is_finite()) => {
                if lml > best.0 {
                    best = (lml, params);
                }
                grad = g;
            }
            _ => break,
        }
    }
    Ok(best.1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::RngStream;
    use rand_distr::{Distribution, StandardNormal};

    const E_HALF: f64 = 0.606_530_659_712_633_4;

    fn unit1() -> KernelParams {
        KernelParams::isotropic(1.0, 1.0, 1).unwrap()
    }

    fn col(v: &[f64]) -> DMatrix<f64> {
        DMatrix::from_column_slice(v.len(), 1, v)
    }

    #[test]
    fn one_point_conditioning() {
        let data = Dataset::new(col(&[0.0]), DVector::from_vec(vec![1.0]), 0.0).unwrap();
        let m = GpModel::new(unit1(), 0.0, data).unwrap();
        let p = m.posterior_value(&col(&[1.0])).unwrap();
        assert!((p.mean[0] - E_HALF).abs() < 1e-7);
        assert!((p.cov[(0, 0)] - (1.0 - (-1.0f64).exp())).abs() < 1e-7);
        let empty = m.posterior_value(&DMatrix::zeros(0, 1)).unwrap();
        assert_eq!(empty.mean.len(), 0);
        assert_eq!(empty.cov.shape(), (0, 0));
    }

    #[test]
    fn interpolates_training_points() {
        let x = [-2.0, -0.5, 0.7, 2.0];
        let y = DVector::from_vec(vec![0.3, -1.0, 0.8, 0.1]);
        let m = GpModel::new(unit1(), 0.0, Dataset::new(col(&x), y.clone(), 0.0).unwrap()).unwrap();
        let p = m.posterior_value(&col(&x)).unwrap();
        for i in 0..4 {
            assert!((p.mean[i] - y[i]).abs() < 1e-6);
            assert!(p.cov[(i, i)] <= 1e-6);
            assert!(p.cov[(i, i)] >= -1e-8);
        }
    }

    #[test]
    fn values_from_derivatives() {
        let p = unit1();
        let s = col(&[0.0]);
        let spec = [DerivSpec::Partial(0)];
        let zero = predict_values_from_derivs(&p, 0.0, &s, &spec, &DVector::zeros(1), &col(&[1.0, 2.0])).unwrap();
        assert!(zero.mean.iter().all(|v| *v == 0.0));
        let same = predict_values_from_derivs(&p, 0.0, &s, &spec, &DVector::from_vec(vec![1.0]), &col(&[0.0])).unwrap();
        assert!(same.mean[0].abs() < 1e-15);
        assert!((same.cov[(0, 0)] - 1.0).abs() < 1e-12);
        let one = predict_values_from_derivs(&p, 0.0, &s, &spec, &DVector::from_vec(vec![1.0]), &col(&[1.0])).unwrap();
        assert!((one.mean[0] - E_HALF).abs() < 1e-7);
    }

    #[test]
    fn lml_scalar_examples() {
        let half_log_2pi = 0.5 * (2.0 * PI).ln();
        let d0 = Dataset::new(col(&[0.0]), DVector::from_vec(vec![0.0]), 0.0).unwrap();
        let m0 = GpModel::new(unit1(), 0.0, d0).unwrap();
        assert!((m0.log_marginal_likelihood() + half_log_2pi).abs() < 1e-7);
        let d2 = Dataset::new(col(&[0.0]), DVector::from_vec(vec![2.0]), 0.0).unwrap();
        let m2 = GpModel::new(unit1(), 0.0, d2).unwrap();
        assert!((m2.log_marginal_likelihood() + 2.0 + half_log_2pi).abs() < 1e-7);
    }

    #[test]
    fn lml_matches_dense_evaluation() {
        let p = KernelParams::new(1.7, vec![0.8, 1.3]).unwrap();
        let x = DMatrix::from_row_slice(2, 2, &[0.1, -0.4, 0.9, 0.6]);
        let y = DVector::from_vec(vec![0.7, -0.2]);
        let m = GpModel::new(p.clone(), 0.3, Dataset::new(x.clone(), y.clone(), 0.0).unwrap()).unwrap();
        // dense oracle: explicit inverse and determinant
        let mut k = cov_self(&x, &[DerivSpec::Value; 2], &p).unwrap();
        k[(0, 0)] += p.jitter();
        k[(1, 1)] += p.jitter();
        let r = y.add_scalar(-0.3);
        let det = k[(0, 0)] * k[(1, 1)] - k[(0, 1)] * k[(1, 0)];
        let inv = k.try_inverse().unwrap();
        let dense = -0.5 * (r.transpose() * inv * &r)[0] - 0.5 * det.ln() - (2.0 * PI).ln();
        assert!((m.log_marginal_likelihood() - dense).abs() < 1e-10);
    }

    #[test]
    fn nugget_gradient_and_smoothing() {
        let x = col(&[-2.0, -1.1, -0.3, 0.4, 1.2, 2.5]);
        let y = DVector::from_vec(vec![0.2, -0.5, 0.9, 0.1, -0.3, 0.6]);
        let data = Dataset::new(x.clone(), y.clone(), 0.3).unwrap();
        let theta = vec![0.2, -0.4];
        let (_, g) = lml_and_gradient_with_nugget(&data, &KernelParams::from_log(&theta).unwrap(), 0.0, 0.09).unwrap();
        for i in 0..2 {
            let h = 1e-5;
            let mut tp = theta.clone();
            tp[i] += h;
            let mut tm = theta.clone();
            tm[i] -= h;
            let f = |t: &[f64]| {
                lml_and_gradient_with_nugget(&data, &KernelParams::from_log(t).unwrap(), 0.0, 0.09).unwrap().0
            };
            let fd = (f(&tp) - f(&tm)) / (2.0 * h);
            assert!((g[i] - fd).abs() <= 1e-6 * fd.abs().max(1.0), "{i}: {} vs {fd}", g[i]);
        }
        // the posterior no longer passes through the data
        let m = GpModel::with_nugget(KernelParams::from_log(&theta).unwrap(), 0.0, data, 0.09).unwrap();
        let p = m.posterior_value(&x).unwrap();
        assert!((0..6).any(|i| (p.mean[i] - y[i]).abs() > 1e-2));
        assert!((0..6).all(|i| p.cov[(i, i)] > 1e-3 && p.cov[(i, i)] < 0.09));
        assert!(GpModel::with_nugget(unit1(), 0.0, m.data.clone(), -1.0).is_err());
    }

    #[test]
    fn lml_gradient_matches_finite_differences() {
        let mut rng = RngStream::new(7, 0).rng();
        for trial in 0..5 {
            let n = 5 + 3 * trial;
            let d = 1 + trial % 2;
            // jittered stratified inputs keep the kernel matrix well conditioned
            let x = DMatrix::from_fn(n, d, |i, j| {
                let z: f64 = StandardNormal.sample(&mut rng);
                let slot = if j == 0 { i } else { (i * 7 + 3) % n };
                -5.0 + 10.0 * slot as f64 / n as f64 + 0.1 * z
            });
            let y = DVector::from_fn(n, |_, _| StandardNormal.sample(&mut rng));
            let data = Dataset::new(x, y, 0.0).unwrap();
            let theta: Vec<f64> = (0..=d).map(|i| if i == 0 { 0.1 * trial as f64 } else { -0.2 + 0.1 * i as f64 }).collect();
            let p = KernelParams::from_log(&theta).unwrap();
            let (_, g) = lml_and_gradient(&data, &p, 0.1).unwrap();
            for i in 0..=d {
                let h = 1e-5;
                let mut tp = theta.clone();
                tp[i] += h;
                let mut tm = theta.clone();
                tm[i] -= h;
                let fp = lml_and_gradient(&data, &KernelParams::from_log(&tp).unwrap(), 0.1).unwrap().0;
                let fm = lml_and_gradient(&data, &KernelParams::from_log(&tm).unwrap(), 0.1).unwrap().0;
                let fd = (fp - fm) / (2.0 * h);
                assert!(
                    (g[i] - fd).abs() <= 1e-5 * fd.abs().max(1.0),
                    "trial {trial} param {i}: {} vs {fd}",
                    g[i]
                );
            }
        }
    }

    #[test]
    fn fit_zero_iterations_returns_init() {
        let data = Dataset::new(col(&[0.0, 1.0, 2.0]), DVector::from_vec(vec![0.0, 1.0, 0.5]), 0.0).unwrap();
        let init = KernelParams::isotropic(0.7, 1.3, 1).unwrap();
        let opts = FitOptions {
            max_iter: 0,
            ..FitOptions::default()
        };
        assert_eq!(fit_hyperparameters(&data, &init, &opts).unwrap(), init);
        assert!(fit_hyperparameters(
            &Dataset::new(col(&[0.0]), DVector::from_vec(vec![1.0]), 0.0).unwrap(),
            &init,
            &opts
        )
        .is_err());
    }

    /// Dense conditioning of a joint Gaussian via an explicit inverse.
    pub(crate) fn brute_force(
        p: &KernelParams,
        obs_x: &DMatrix<f64>,
        obs_s: &[DerivSpec],
        obs: &DVector<f64>,
        u: &DMatrix<f64>,
    ) -> (DVector<f64>, DMatrix<f64>) {
        let d = u.ncols();
        let n = obs_x.nrows();
        let all = DMatrix::from_fn(n + u.nrows(), d, |i, j| if i < n { obs_x[(i, j)] } else { u[(i - n, j)] });
        let specs: Vec<DerivSpec> = obs_s.iter().copied().chain(std::iter::repeat_n(DerivSpec::Value, u.nrows())).collect();
        let joint = cov_self(&all, &specs, p).unwrap();
        let mut koo = joint.view((0, 0), (n, n)).into_owned();
        for i in 0..n {
            koo[(i, i)] += p.jitter();
        }
        let kuo = joint.view((n, 0), (u.nrows(), n)).into_owned();
        let kuu = joint.view((n, n), (u.nrows(), u.nrows())).into_owned();
        let inv = koo.try_inverse().unwrap();
        (&kuo * &inv * obs, kuu - &kuo * &inv * kuo.transpose())
    }

    #[test]
    fn enhanced_small_example_matches_brute_force() {
        let p = unit1();
        let m = GpModel::new(p.clone(), 0.0, Dataset::new(col(&[0.0]), DVector::from_vec(vec![0.0]), 0.0).unwrap()).unwrap();
        let got = m.predict_enhanced(&col(&[2.0]), &[DerivSpec::Partial(0)], &DVector::from_vec(vec![1.0]), &col(&[1.0])).unwrap();
        let (mean, cov) = brute_force(
            &p,
            &col(&[0.0, 2.0]),
            &[DerivSpec::Value, DerivSpec::Partial(0)],
            &DVector::from_vec(vec![0.0, 1.0]),
            &col(&[1.0]),
        );
        assert!((got.mean[0] - mean[0]).abs() < 1e-10);
        assert!((got.cov[(0, 0)] - cov[(0, 0)]).abs() < 1e-10);
    }

    #[test]
    fn enhanced_degenerate_blocks() {
        let p = KernelParams::new(1.3, vec![0.9]).unwrap();
        let data = Dataset::new(col(&[-1.0, 0.5, 2.0]), DVector::from_vec(vec![0.2, -0.4, 1.0]), 0.0).unwrap();
        let m = GpModel::new(p.clone(), 0.0, data).unwrap();
        let u = col(&[-2.0, 0.0, 1.0, 3.0]);
        let a = m.posterior_value(&u).unwrap();
        let b = m.predict_enhanced(&DMatrix::zeros(0, 1), &[], &DVector::zeros(0), &u).unwrap();
        assert!((&a.mean - &b.mean).amax() < 1e-12);
        assert!((&a.cov - &b.cov).amax() < 1e-12);
        // no value observations: the derivative-only map
        let s = col(&[-1.5, 0.0, 1.5]);
        let specs = [DerivSpec::Partial(0); 3];
        let fp = DVector::from_vec(vec![0.5, 1.0, 0.2]);
        let only = predict_values_from_derivs(&p, 0.0, &s, &specs, &fp, &u).unwrap();
        let (mean, cov) = brute_force(&p, &s, &specs, &fp, &u);
        assert!((&only.mean - mean).amax() < 1e-10);
        assert!((&only.cov - cov).amax() < 1e-10);
    }

    /// Uniform points in a box wide enough to hold them, redrawn until every
    /// pair is at least `sep` apart in lengthscale units.
    pub(crate) fn spaced_points<R: rand::Rng>(rng: &mut R, count: usize, d: usize, p: &KernelParams, sep: f64) -> DMatrix<f64> {
        let mut pts: Vec<Vec<f64>> = Vec::new();
        let lmax = p.lengthscales().iter().cloned().fold(0.0, f64::max);
        let half = 3.0f64.max(count as f64 * sep * lmax);
        while pts.len() < count {
            let c: Vec<f64> = (0..d).map(|_| rng.random_range(-half..half)).collect();
            let ok = pts.iter().all(|q| {
                q.iter().zip(&c).enumerate().map(|(j, (a, b))| ((a - b) / p.lengthscales()[j]).powi(2)).sum::<f64>() >= sep * sep
            });
            if ok {
                pts.push(c);
            }
        }
        DMatrix::from_fn(count, d, |i, j| pts[i][j])
    }

    #[test]
    fn enhanced_matches_brute_force_on_random_instances() {
        let mut rng = RngStream::new(21, 0).rng();
        use rand::Rng;
        for _ in 0..200 {
            let d = rng.random_range(1..=2);
            let n = rng.random_range(1..=6);
            let m = rng.random_range(1..=6);
            let ls: Vec<f64> = (0..d).map(|_| rng.random_range(0.5..1.2)).collect();
            let p = KernelParams::new(rng.random_range(0.5..2.0), ls).unwrap();
            let pts = spaced_points(&mut rng, n + m, d, &p, 0.7);
            let x = pts.rows(0, n).into_owned();
            let s = pts.rows(n, m).into_owned();
            let specs: Vec<DerivSpec> = (0..m).map(|_| DerivSpec::Partial(rng.random_range(0..d))).collect();
            let y = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
            let fp = DVector::from_fn(m, |_, _| rng.random_range(0.0..1.0));
            let u = DMatrix::from_fn(3, d, |_, _| rng.random_range(-3.0..3.0));
            let model = GpModel::new(p.clone(), 0.0, Dataset::new(x.clone(), y.clone(), 0.0).unwrap()).unwrap();
            let got = model.predict_enhanced(&s, &specs, &fp, &u).unwrap();
            let (ox, os) = stack(&x, &vec![DerivSpec::Value; n], &s, &specs).unwrap();
            let obs = DVector::from_iterator(n + m, y.iter().chain(fp.iter()).copied());
            let (mean, cov) = brute_force(&p, &ox, &os, &obs, &u);
            let cond = {
                let mut j = cov_self(&ox, &os, &p).unwrap();
                for i in 0..n + m { j[(i, i)] += p.jitter(); }
                let e = j.symmetric_eigen().eigenvalues;
                e.max() / e.min()
            };
            assert!(cond < 1e7, "cond {cond:e}");
            assert!((&got.mean - mean).amax() < 1e-9);
            assert!((&got.cov - cov).amax() < 1e-9);
        }
    }

    #[test]
    fn fit_recovers_generating_hyperparameters() {
        let truth = unit1();
        let n = 60;
        let x = DMatrix::from_fn(n, 1, |i, _| -10.0 + 20.0 * i as f64 / (n - 1) as f64);
        let k = cov_self(&x, &vec![DerivSpec::Value; n], &truth).unwrap();
        let chol = cholesky_jittered(k, truth.jitter(), "prior").unwrap();
        let mut rng = RngStream::new(31, 0).rng();
        let z = DVector::from_fn(n, |_, _| StandardNormal.sample(&mut rng));
        let y = crate::linalg::lower_mul(&chol, &z);
        let data = Dataset::new(x, y, 0.0).unwrap();
        let init = default_init(&data).unwrap();
        let fitted = fit_hyperparameters(&data, &init, &FitOptions::default()).unwrap();
        let t = fitted.to_log();
        assert!(t[0].abs() < 0.5, "log variance {}", t[0]);
        assert!(t[1].abs() < 0.5, "log lengthscale {}", t[1]);
        let before = lml_and_gradient(&data, &init, 0.0).unwrap().0;
        let after = lml_and_gradient(&data, &fitted, 0.0).unwrap().0;
        assert!(after >= before - 1e-9);
    }
}
