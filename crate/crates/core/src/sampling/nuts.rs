//! No-U-Turn sampler with multinomial trajectory sampling, the generalized
//! U-turn criterion and dual-averaging step-size adaptation. Unit metric.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{RngStream, SampleBatch, TargetDensity};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NutsOptions {
    pub target_accept: f64,
    pub max_depth: usize,
    pub max_delta_h: f64,
    /// Skip the initial step-size search and start from this value.
    pub init_step: Option<f64>,
}

impl Default for NutsOptions {
    fn default() -> Self {
        NutsOptions {
            target_accept: 0.8,
            max_depth: 10,
            max_delta_h: 1000.0,
            init_step: None,
        }
    }
}

#[derive(Clone)]
struct Point {
    q: DVector<f64>,
    p: DVector<f64>,
    logp: f64,
    grad: DVector<f64>,
}

impl Point {
    fn hamiltonian(&self) -> f64 {
        -self.logp + 0.5 * self.p.norm_squared()
    }
}

fn leapfrog(t: &dyn TargetDensity, z: &Point, eps: f64) -> Point {
    let p_half = &z.p + &z.grad * (0.5 * eps);
    let q = &z.q + &p_half * eps;
    let (logp, grad) = t.logpdf_and_grad(&q);
    let p = p_half + &grad * (0.5 * eps);
    Point { q, p, logp, grad }
}

/// A subtree in build order: `beg` is adjacent to the existing trajectory,
/// `end` is the outermost state.
struct Tree {
    beg: Point,
    end: Point,
    rho: DVector<f64>,
    log_w: f64,
    proposal: Point,
}

#[derive(Default)]
struct Stats {
    n_leapfrog: usize,
    sum_accept: f64,
    diverged: bool,
}

fn no_uturn(p_minus: &DVector<f64>, p_plus: &DVector<f64>, rho: &DVector<f64>) -> bool {
    p_minus.dot(rho) > 0.0 && p_plus.dot(rho) > 0.0
}

fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// Generalized criterion between two adjacent trees in build order.
fn merged_ok(inner: &Tree, outer: &Tree, rho: &DVector<f64>) -> bool {
    no_uturn(&inner.beg.p, &outer.end.p, rho)
        && no_uturn(&inner.beg.p, &outer.beg.p, &(&inner.rho + &outer.beg.p))
        && no_uturn(&inner.end.p, &outer.end.p, &(&outer.rho + &inner.end.p))
}

struct Builder<'a> {
    target: &'a dyn TargetDensity,
    eps: f64,
    h0: f64,
    max_delta_h: f64,
}

impl Builder<'_> {
    /// Returns `None` if the subtree diverged or turned.
    fn build(&self, from: &Point, depth: usize, rng: &mut ChaCha8Rng, stats: &mut Stats) -> Option<Tree> {
        if depth == 0 {
            let z = leapfrog(self.target, from, self.eps);
            let mut h = z.hamiltonian();
            if !h.is_finite() {
                h = f64::INFINITY;
            }
            stats.n_leapfrog += 1;
            stats.sum_accept += if self.h0 - h > 0.0 { 1.0 } else { (self.h0 - h).exp() };
            if h - self.h0 > self.max_delta_h {
                stats.diverged = true;
                return None;
            }
            return Some(Tree {
                beg: z.clone(),
                end: z.clone(),
                rho: z.p.clone(),
                log_w: self.h0 - h,
                proposal: z,
            });
        }
        let inner = self.build(from, depth - 1, rng, stats)?;
        let outer = self.build(&inner.end, depth - 1, rng, stats)?;
        let log_w = log_add(inner.log_w, outer.log_w);
        let take_outer = rng.random::<f64>() < (outer.log_w - log_w).exp();
        let rho = &inner.rho + &outer.rho;
        if !merged_ok(&inner, &outer, &rho) {
            return None;
        }
        let proposal = if take_outer { outer.proposal } else { inner.proposal };
        Some(Tree {
            beg: inner.beg,
            end: outer.end,
            rho,
            log_w,
            proposal,
        })
    }
}

struct Transition {
    q: DVector<f64>,
    logp: f64,
    grad: DVector<f64>,
    accept: f64,
    diverged: bool,
}

fn sample_momentum(d: usize, rng: &mut ChaCha8Rng) -> DVector<f64> {
    DVector::from_fn(d, |_, _| StandardNormal.sample(rng))
}

fn transition(
    target: &dyn TargetDensity,
    q: &DVector<f64>,
    logp: f64,
    grad: &DVector<f64>,
    eps: f64,
    opts: &NutsOptions,
    rng: &mut ChaCha8Rng,
) -> Transition {
    let z0 = Point {
        q: q.clone(),
        p: sample_momentum(q.len(), rng),
        logp,
        grad: grad.clone(),
    };
    let builder = Builder {
        target,
        eps,
        h0: z0.hamiltonian(),
        max_delta_h: opts.max_delta_h,
    };
    // trajectory as (left, right) in time order
    let mut left = z0.clone();
    let mut right = z0.clone();
    let mut rho = z0.p.clone();
    let mut log_w = 0.0;
    let mut sample = z0;
    let mut stats = Stats::default();
    for depth in 0..opts.max_depth {
        let forward = rng.random::<f64>() < 0.5;
        let sub = if forward {
            let b = Builder { eps, ..builder };
            b.build(&right, depth, rng, &mut stats)
        } else {
            let b = Builder { eps: -eps, ..builder };
            b.build(&left, depth, rng, &mut stats)
        };
        let Some(sub) = sub else {
            break;
        };
        // biased progressive sampling at the top level
        if sub.log_w > log_w || rng.random::<f64>() < (sub.log_w - log_w).exp() {
            sample = sub.proposal.clone();
        }
        log_w = log_add(log_w, sub.log_w);
        let old = if forward {
            Tree {
                beg: left.clone(),
                end: right.clone(),
                rho: rho.clone(),
                log_w: 0.0,
                proposal: sample.clone(),
            }
        } else {
            Tree {
                beg: right.clone(),
                end: left.clone(),
                rho: rho.clone(),
                log_w: 0.0,
                proposal: sample.clone(),
            }
        };
        rho = &rho + &sub.rho;
        let ok = merged_ok(&old, &sub, &rho);
        if forward {
            right = sub.end;
        } else {
            left = sub.end;
        }
        if !ok {
            break;
        }
    }
    Transition {
        q: sample.q,
        logp: sample.logp,
        grad: sample.grad,
        accept: if stats.n_leapfrog > 0 {
            stats.sum_accept / stats.n_leapfrog as f64
        } else {
            0.0
        },
        diverged: stats.diverged,
    }
}

fn find_reasonable_step(
    target: &dyn TargetDensity,
    q: &DVector<f64>,
    logp: f64,
    grad: &DVector<f64>,
    rng: &mut ChaCha8Rng,
) -> f64 {
    let mut eps: f64 = 1.0;
    let log_target = 0.8f64.ln();
    let delta = |eps: f64, rng: &mut ChaCha8Rng| {
        let z = Point {
            q: q.clone(),
            p: sample_momentum(q.len(), rng),
            logp,
            grad: grad.clone(),
        };
        let h0 = z.hamiltonian();
        let h = leapfrog(target, &z, eps).hamiltonian();
        if h.is_finite() {
            h0 - h
        } else {
            f64::NEG_INFINITY
        }
    };
    let up = delta(eps, rng) > log_target;
    for _ in 0..100 {
        let d = delta(eps, rng);
        if up && !(d > log_target) {
            break;
        }
        if !up && !(d < log_target) {
            break;
        }
        eps = if up { eps * 2.0 } else { eps * 0.5 };
        if !(1e-12..=1e7).contains(&eps) {
            break;
        }
    }
    eps.clamp(1e-12, 1e7)
}

struct DualAveraging {
    mu: f64,
    s_bar: f64,
    x_bar: f64,
    counter: f64,
    delta: f64,
}

impl DualAveraging {
    const GAMMA: f64 = 0.05;
    const T0: f64 = 10.0;
    const KAPPA: f64 = 0.75;

    fn new(eps0: f64, delta: f64) -> Self {
        DualAveraging {
            mu: (10.0 * eps0).ln(),
            s_bar: 0.0,
            x_bar: 0.0,
            counter: 0.0,
            delta,
        }
    }

    fn update(&mut self, accept: f64) -> f64 {
        self.counter += 1.0;
        let accept = accept.min(1.0);
        let eta = 1.0 / (self.counter + Self::T0);
        self.s_bar = (1.0 - eta) * self.s_bar + eta * (self.delta - accept);
        let x = self.mu - self.s_bar * self.counter.sqrt() / Self::GAMMA;
        let w = self.counter.powf(-Self::KAPPA);
        self.x_bar = (1.0 - w) * self.x_bar + w * x;
        x.exp()
    }

    fn final_step(&self) -> f64 {
        self.x_bar.exp()
    }
}

/// Run NUTS from `x0`. `n_samples` counts all iterations; the first
/// `burn_in` adapt the step size and are discarded.
pub fn nuts_sample(
    target: &dyn TargetDensity,
    x0: &DVector<f64>,
    n_samples: usize,
    burn_in: usize,
    rng: &RngStream,
    opts: &NutsOptions,
) -> Result<SampleBatch> {
    if x0.len() != target.dim() {
        return Err(Error::arg("initial point has the wrong dimension"));
    }
    if n_samples <= burn_in {
        return Err(Error::arg("n_samples must exceed burn_in"));
    }
    let (mut logp, mut grad) = target.logpdf_and_grad(x0);
    if !logp.is_finite() {
        return Err(Error::arg("log density is not finite at the initial point"));
    }
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::arg("gradient is not finite at the initial point"));
    }
    let start = Instant::now();
    let mut r = rng.rng();
    let mut q = x0.clone();
    let mut eps = match opts.init_step {
        Some(e) if e > 0.0 => e,
        _ => find_reasonable_step(target, &q, logp, &grad, &mut r),
    };
    let mut adapt = DualAveraging::new(eps, opts.target_accept);
    let kept = n_samples - burn_in;
    let mut draws = DMatrix::zeros(kept, x0.len());
    let mut divergences = 0;
    let mut burn_divergences = 0;
    let mut accept_sum = 0.0;
    for it in 0..n_samples {
        let tr = transition(target, &q, logp, &grad, eps, opts, &mut r);
        q = tr.q;
        logp = tr.logp;
        grad = tr.grad;
        if tr.diverged {
            divergences += 1;
            if it < burn_in {
                burn_divergences += 1;
            }
        }
        if it < burn_in {
            eps = adapt.update(tr.accept);
            if it + 1 == burn_in {
                eps = adapt.final_step();
            }
        } else {
            accept_sum += tr.accept;
            draws.row_mut(it - burn_in).tr_copy_from(&q);
        }
    }
    let mut batch = SampleBatch::new(draws, "nuts", rng.seed);
    batch.burn_in = burn_in;
    batch.seconds = start.elapsed().as_secs_f64();
    batch.accept_rate = Some(accept_sum / kept as f64);
    batch.divergences = divergences;
    batch.divergence_flag = burn_in > 0 && 2 * burn_divergences > burn_in;
    batch.step_size = Some(eps);
    Ok(batch)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diagnostics::iat;

    struct Gaussian {
        mean: DVector<f64>,
        precision: DMatrix<f64>,
    }

    impl TargetDensity for Gaussian {
        fn dim(&self) -> usize {
            self.mean.len()
        }
        fn logpdf(&self, x: &DVector<f64>) -> f64 {
            let d = x - &self.mean;
            -0.5 * d.dot(&(&self.precision * &d))
        }
        fn logpdf_and_grad(&self, x: &DVector<f64>) -> (f64, DVector<f64>) {
            let d = x - &self.mean;
            let pd = &self.precision * &d;
            (-0.5 * d.dot(&pd), -pd)
        }
    }

    #[test]
    fn standard_normal_moments() {
        let t = Gaussian {
            mean: DVector::zeros(1),
            precision: DMatrix::identity(1, 1),
        };
        let b = nuts_sample(&t, &DVector::zeros(1), 51_000, 1000, &RngStream::new(5, 0), &NutsOptions::default())
            .unwrap();
        let c: Vec<f64> = b.draws.column(0).iter().copied().collect();
        let mean = c.iter().sum::<f64>() / c.len() as f64;
        let var = c.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / c.len() as f64;
        assert!(mean.abs() < 0.02, "{mean}");
        assert!((0.95..1.05).contains(&var), "{var}");
        assert!(b.accept_rate.unwrap() > 0.6);
    }

    #[test]
    fn correlated_five_dimensional_moments() {
        let mut r = RngStream::new(9, 9).rng();
        let b = DMatrix::<f64>::from_fn(5, 5, |_, _| StandardNormal.sample(&mut r));
        let cov = &b * b.transpose() + DMatrix::identity(5, 5) * 0.5;
        let mean = DVector::from_vec(vec![1.0, -2.0, 0.5, 0.0, 3.0]);
        let t = Gaussian {
            mean: mean.clone(),
            precision: cov.clone().try_inverse().unwrap(),
        };
        let batch = nuts_sample(&t, &DVector::zeros(5), 21_000, 1000, &RngStream::new(6, 0), &NutsOptions::default())
            .unwrap();
        let n = batch.len() as f64;
        for j in 0..5 {
            let c: Vec<f64> = batch.draws.column(j).iter().copied().collect();
            let tau = iat(&c).unwrap().value;
            let m = c.iter().sum::<f64>() / n;
            let v = c.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
            let se_m = (cov[(j, j)] * tau / n).sqrt();
            let se_v = cov[(j, j)] * (2.0 * tau / n).sqrt();
            assert!((m - mean[j]).abs() < 4.0 * se_m, "mean {j}: {m} vs {}", mean[j]);
            assert!((v - cov[(j, j)]).abs() < 4.0 * se_v, "var {j}: {v} vs {}", cov[(j, j)]);
        }
    }

    #[test]
    fn replay_is_identical() {
        let t = Gaussian {
            mean: DVector::from_vec(vec![0.3, -0.1]),
            precision: DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]),
        };
        let run = || {
            nuts_sample(&t, &DVector::zeros(2), 600, 100, &RngStream::new(77, 3), &NutsOptions::default())
                .unwrap()
                .draws
        };
        assert_eq!(run(), run());
    }

    struct HalfLine;

    impl TargetDensity for HalfLine {
        fn dim(&self) -> usize {
            1
        }
        fn logpdf(&self, x: &DVector<f64>) -> f64 {
            if x[0] < 0.0 {
                f64::NEG_INFINITY
            } else {
                -x[0]
            }
        }
        fn logpdf_and_grad(&self, x: &DVector<f64>) -> (f64, DVector<f64>) {
            (self.logpdf(x), DVector::from_element(1, -1.0))
        }
    }

    #[test]
    fn never_returns_zero_density_states() {
        let b = nuts_sample(&HalfLine, &DVector::from_element(1, 1.0), 3000, 500, &RngStream::new(1, 1), &NutsOptions::default())
            .unwrap();
        assert!(b.draws.iter().all(|&x| x >= 0.0));
    }

    #[test]
    fn rejects_bad_start() {
        let err = nuts_sample(&HalfLine, &DVector::from_element(1, -1.0), 10, 5, &RngStream::new(1, 1), &NutsOptions::default());
        assert!(err.is_err());
    }
}
