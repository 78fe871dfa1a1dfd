//! Accuracy and sampling-efficiency metrics.

use nalgebra::DMatrix;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Mean over samples of the squared error, divided by the number of points.
pub fn mse(samples: &DMatrix<f64>, truth: &[f64]) -> Result<f64> {
    if samples.ncols() != truth.len() || samples.nrows() == 0 || truth.is_empty() {
        return Err(Error::arg("samples and truth shapes disagree"));
    }
    let mut total = 0.0;
    for i in 0..samples.nrows() {
        for (j, t) in truth.iter().enumerate() {
            total += (samples[(i, j)] - t).powi(2);
        }
    }
    Ok(total / (samples.nrows() * truth.len()) as f64)
}

/// Quantile of sorted data with linear interpolation between order statistics.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = q * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

/// Central credible interval `(lower, upper)` of one column.
pub fn interval(column: &[f64], level: f64) -> (f64, f64) {
    let mut s = column.to_vec();
    s.sort_by(|a, b| a.total_cmp(b));
    let tail = 0.5 * (1.0 - level);
    (quantile_sorted(&s, tail), quantile_sorted(&s, 1.0 - tail))
}

pub const MIN_CI_SAMPLES: usize = 40;

/// Mean width of the per-column central credible intervals.
pub fn ci_width(samples: &DMatrix<f64>, level: f64) -> Result<f64> {
    if samples.nrows() < MIN_CI_SAMPLES {
        return Err(Error::arg(format!(
            "credible intervals need at least {MIN_CI_SAMPLES} samples, got {}",
            samples.nrows()
        )));
    }
    if !(0.0 < level && level < 1.0) {
        return Err(Error::arg("level must lie in (0, 1)"));
    }
    let m = samples.ncols();
    let total: f64 = (0..m)
        .map(|j| {
            let col: Vec<f64> = samples.column(j).iter().copied().collect();
            let (lo, hi) = interval(&col, level);
            hi - lo
        })
        .sum();
    Ok(total / m as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Iat {
    pub value: f64,
    /// The chain was constant; `value` is 1.
    pub zero_variance: bool,
}

pub const MIN_IAT_SAMPLES: usize = 100;

/// Normalized autocorrelation of a chain via FFT (biased estimator).
fn autocorrelation(chain: &[f64]) -> Option<Vec<f64>> {
    let n = chain.len();
    let mean = chain.iter().sum::<f64>() / n as f64;
    let size = (2 * n).next_power_of_two();
    let mut buf: Vec<Complex<f64>> = chain
        .iter()
        .map(|x| Complex::new(x - mean, 0.0))
        .chain(std::iter::repeat(Complex::new(0.0, 0.0)))
        .take(size)
        .collect();
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(size).process(&mut buf);
    for c in buf.iter_mut() {
        *c = Complex::new(c.norm_sqr(), 0.0);
    }
    planner.plan_fft_inverse(size).process(&mut buf);
    let c0 = buf[0].re;
    if !(c0 > 1e-300 * n as f64) {
        return None;
    }
    Some(buf[..n].iter().map(|c| c.re / c0).collect())
}

/// Integrated autocorrelation time with Geyer's initial positive sequence,
/// floored at 1.
pub fn iat(chain: &[f64]) -> Result<Iat> {
    if chain.len() < MIN_IAT_SAMPLES {
        return Err(Error::arg(format!(
            "autocorrelation time needs at least {MIN_IAT_SAMPLES} samples, got {}",
            chain.len()
        )));
    }
    if chain.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numerical("chain has non-finite values".into()));
    }
    let first = chain[0];
    let Some(rho) = autocorrelation(chain).filter(|_| chain.iter().any(|&x| x != first)) else {
        return Ok(Iat {
            value: 1.0,
            zero_variance: true,
        });
    };
    let mut sum = 0.0;
    let mut k = 0;
    while 2 * k + 1 < rho.len() {
        let pair = rho[2 * k] + rho[2 * k + 1];
        if pair <= 0.0 {
            break;
        }
        sum += pair;
        k += 1;
    }
    Ok(Iat {
        value: (2.0 * sum - 1.0).max(1.0),
        zero_variance: false,
    })
}

/// Average IAT over columns, plus the number of constant columns.
pub fn mean_iat(draws: &DMatrix<f64>) -> Result<(f64, usize)> {
    if draws.ncols() == 0 {
        return Err(Error::arg("no components"));
    }
    let mut total = 0.0;
    let mut flat = 0;
    for j in 0..draws.ncols() {
        let col: Vec<f64> = draws.column(j).iter().copied().collect();
        let t = iat(&col)?;
        total += t.value;
        flat += t.zero_variance as usize;
    }
    Ok((total / draws.ncols() as f64, flat))
}

pub fn ess_per_second(n_samples: usize, mean_iat: f64, runtime_seconds: f64) -> Result<f64> {
    if n_samples == 0 || !(mean_iat > 0.0) || !(runtime_seconds > 0.0) {
        return Err(Error::arg("ess_per_second needs positive inputs"));
    }
    Ok(n_samples as f64 / mean_iat / runtime_seconds)
}

/// Summary metrics of one run. Sampler-efficiency fields are `None` when
/// not applicable (unconstrained runs) or when timing is disabled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub mse: f64,
    pub mean_ci_width: f64,
    pub mean_iat: Option<f64>,
    pub ess_per_second: Option<f64>,
    pub n_samples: usize,
    pub runtime_seconds: Option<f64>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::RngStream;
    use proptest::prelude::*;
    use rand_distr::{Distribution, StandardNormal};

    fn normals(seed: u64, n: usize) -> Vec<f64> {
        let mut r = RngStream::new(seed, 0).rng();
        (0..n).map(|_| StandardNormal.sample(&mut r)).collect()
    }

    fn ar1(seed: u64, n: usize, rho: f64) -> Vec<f64> {
        let e = normals(seed, n);
        let mut x = vec![0.0; n];
        x[0] = e[0] / (1.0 - rho * rho).sqrt();
        for i in 1..n {
            x[i] = rho * x[i - 1] + e[i];
        }
        x
    }

    #[test]
    fn mse_examples() {
        let s = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 3.0, 3.0]);
        assert_eq!(mse(&s, &[2.0, 2.0]).unwrap(), 1.0);
        assert_eq!(mse(&DMatrix::from_row_slice(1, 2, &[2.0, 2.0]), &[2.0, 2.0]).unwrap(), 0.0);
        let v = normals(3, 7);
        let direct = v.iter().zip(&[0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7]).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / 7.0;
        let got = mse(&DMatrix::from_row_slice(1, 7, &v), &[0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7]).unwrap();
        assert!((got - direct).abs() < 1e-12);
        assert!(mse(&s, &[1.0]).is_err());
    }

    #[test]
    fn ci_examples() {
        let v = normals(4, 100_000);
        let s = DMatrix::from_column_slice(v.len(), 1, &v);
        assert!((ci_width(&s, 0.95).unwrap() - 3.92).abs() < 0.05);
        assert_eq!(ci_width(&DMatrix::from_element(50, 3, 2.5), 0.95).unwrap(), 0.0);
        let w = ci_width(&s, 0.95).unwrap();
        assert_eq!(ci_width(&(s * 2.0), 0.95).unwrap(), 2.0 * w);
        assert!(ci_width(&DMatrix::zeros(39, 1), 0.95).is_err());
    }

    #[test]
    fn iat_examples() {
        assert!((iat(&normals(5, 50_000)).unwrap().value - 1.0).abs() < 0.1);
        assert!((iat(&ar1(6, 100_000, 0.5)).unwrap().value - 3.0).abs() < 0.3);
        assert!((iat(&ar1(7, 100_000, 0.9)).unwrap().value - 19.0).abs() < 3.0);
        let flat = iat(&[1.5; 200]).unwrap();
        assert!(flat.zero_variance && flat.value == 1.0);
        assert!(iat(&[0.0; 99]).is_err());
    }

    #[test]
    fn ess_examples() {
        assert_eq!(ess_per_second(50_000, 1.0, 10.0).unwrap(), 5000.0);
        assert_eq!(ess_per_second(50_000, 100.0, 10.0).unwrap(), 50.0);
        assert_eq!(ess_per_second(50_000, 3.0, 20.0).unwrap() * 2.0, ess_per_second(50_000, 3.0, 10.0).unwrap());
        assert!(ess_per_second(1, 1.0, 0.0).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn iat_affine_invariant(seed in any::<u64>(), a in prop_oneof![-5.0f64..-0.1, 0.1f64..5.0], b in -10.0f64..10.0) {
            let x = ar1(seed, 2000, 0.7);
            let y: Vec<f64> = x.iter().map(|v| a * v + b).collect();
            let tx = iat(&x).unwrap().value;
            let ty = iat(&y).unwrap().value;
            prop_assert!((tx - ty).abs() < 1e-6 * tx);
        }

        #[test]
        fn mse_nonnegative(vals in proptest::collection::vec(-5.0f64..5.0, 6), truth in proptest::collection::vec(-5.0f64..5.0, 3)) {
            let s = DMatrix::from_row_slice(2, 3, &vals);
            let e = mse(&s, &truth).unwrap();
            prop_assert!(e >= 0.0);
            let same = DMatrix::from_fn(2, 3, |_, j| truth[j]);
            prop_assert_eq!(mse(&same, &truth).unwrap(), 0.0);
        }
    }
}
