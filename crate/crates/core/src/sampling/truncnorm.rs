//! Standard normal distribution helpers and 1D truncated-normal sampling.

use std::f64::consts::{PI, SQRT_2};

use rand::Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use statrs::function::erf::{erfc, erfc_inv};

/// Standard normal CDF.
pub fn norm_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / SQRT_2)
}

/// Standard normal survival function `1 - Φ(z)`, accurate in the upper tail.
pub fn norm_sf(z: f64) -> f64 {
    0.5 * erfc(z / SQRT_2)
}

/// `z` such that `norm_sf(z) = p`.
pub fn norm_isf(p: f64) -> f64 {
    SQRT_2 * erfc_inv(2.0 * p)
}

pub fn norm_logpdf(z: f64) -> f64 {
    -0.5 * z * z - 0.5 * (2.0 * PI).ln()
}

/// `log Φ(z)`, stable far into the lower tail.
pub fn log_norm_cdf(z: f64) -> f64 {
    if z < -20.0 {
        // Mills ratio series
        let z2 = z * z;
        norm_logpdf(z) - (-z).ln() + (1.0 - 1.0 / z2 + 3.0 / (z2 * z2)).ln()
    } else if z > 5.0 {
        (-norm_sf(z)).ln_1p()
    } else {
        norm_cdf(z).ln()
    }
}

/// Standard normal truncated to `[a, ∞)`.
fn std_lower<R: Rng + ?Sized>(a: f64, rng: &mut R) -> f64 {
    if a == f64::NEG_INFINITY {
        return StandardNormal.sample(rng);
    }
    if a > 4.0 {
        // exponential rejection with the optimal rate
        let rate = 0.5 * (a + (a * a + 4.0).sqrt());
        let exp = Exp::new(rate).expect("positive rate");
        loop {
            let z = a + exp.sample(rng);
            let u: f64 = rng.random();
            if u <= (-0.5 * (z - rate) * (z - rate)).exp() {
                return z;
            }
        }
    }
    let u = 1.0 - rng.random::<f64>();
    let z = norm_isf(norm_sf(a) * u);
    z.max(a)
}

/// Draw from `N(mu, sd²)` restricted to `[lo, ∞)`. `lo = -∞` is untruncated.
pub fn sample_truncnorm_lower<R: Rng + ?Sized>(mu: f64, sd: f64, lo: f64, rng: &mut R) -> f64 {
    debug_assert!(sd > 0.0);
    mu + sd * std_lower((lo - mu) / sd, rng)
}

/// Draw from `N(mu, sd²)` restricted to `(-∞, hi]`.
pub fn sample_truncnorm_upper<R: Rng + ?Sized>(mu: f64, sd: f64, hi: f64, rng: &mut R) -> f64 {
    mu - sd * std_lower((mu - hi) / sd, rng)
}
