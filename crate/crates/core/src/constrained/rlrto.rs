//! Randomize-then-optimize with nonnegativity bounds: each draw perturbs
//! the data and the prior mean, then solves the bounded least-squares
//! problem.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use super::ConstrainedProblem;
use crate::error::{Error, Result};
use crate::linalg::solve_upper_transpose_vec;
use crate::sampling::{solve_quadratic, Bounds, LsqSolution, Quadratic, RngStream, SampleBatch, SolverOptions};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RlrtoOptions {
    /// Start each solve from the previous solution (draws run in order).
    /// Without it draws are independent and run in parallel.
    pub warm_start: bool,
    pub bounds: Bounds,
    pub solver: SolverOptions,
}

impl Default for RlrtoOptions {
    fn default() -> Self {
        RlrtoOptions {
            warm_start: true,
            bounds: Bounds::NonNegative,
            solver: SolverOptions::default(),
        }
    }
}

/// Linear term of one randomized problem: with `b̂ = f + L_Σ z₁` and
/// `ĉ = L_K z₂`, `AᵀΣ*⁻¹b̂ + K11⁻¹ĉ = h + Ãᵀz₁ + L_K⁻ᵀz₂`.
fn randomized_linear(prob: &ConstrainedProblem, data: &DVector<f64>, stream: &RngStream) -> DVector<f64> {
    let mut r = stream.rng();
    let z1 = DVector::from_fn(prob.n_obs(), |_, _| StandardNormal.sample(&mut r));
    let z2 = DVector::from_fn(prob.n_virtual(), |_, _| StandardNormal.sample(&mut r));
    data + prob.a_white.transpose() * z1 + solve_upper_transpose_vec(&prob.chol_k11, &z2)
}

/// `n_draws` independent-perturbation solutions. No burn-in.
pub fn sample_rlrto(
    prob: &ConstrainedProblem,
    f_t: &DVector<f64>,
    n_draws: usize,
    rng: &RngStream,
    opts: &RlrtoOptions,
) -> Result<SampleBatch> {
    if n_draws == 0 {
        return Err(Error::arg("at least one draw is required"));
    }
    let start = Instant::now();
    let data = prob.data_term(f_t)?;
    let m = prob.n_virtual();
    let base = Quadratic {
        hessian: prob.posterior_precision(),
        linear: DVector::zeros(m),
        bounds: opts.bounds,
    };
    let solutions: Vec<LsqSolution> = if opts.warm_start {
        let mut q = base;
        let mut x = match opts.bounds {
            Bounds::NonNegative => prob.constrained_mode(f_t)?,
            Bounds::Unbounded => DVector::zeros(m),
        };
        let mut out = Vec::with_capacity(n_draws);
        for k in 0..n_draws {
            q.linear = randomized_linear(prob, &data, &rng.substream(k as u64));
            let s = solve_quadratic(&q, &x, &opts.solver);
            x.copy_from(&s.x);
            out.push(s);
        }
        out
    } else {
        let zero = DVector::zeros(m);
        (0..n_draws)
            .into_par_iter()
            .map(|k| {
                let q = Quadratic {
                    linear: randomized_linear(prob, &data, &rng.substream(k as u64)),
                    ..base.clone()
                };
                solve_quadratic(&q, &zero, &opts.solver)
            })
            .collect()
    };
    let degraded = solutions.iter().filter(|s| s.degraded).count();
    let draws = DMatrix::from_fn(n_draws, m, |i, j| solutions[i].x[j]);
    let mut batch = SampleBatch::new(draws, "rlrto", rng.seed);
    batch.degraded = degraded;
    batch.seconds = start.elapsed().as_secs_f64();
    Ok(batch)
}
