//! Push derivative samples through the derivative-enhanced conditional to
//! draws of function values, and summarize them.

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ConstrainedProblem;
use crate::diagnostics::{interval, MIN_CI_SAMPLES};
use crate::error::{Error, Result};
use crate::gp::{stack, Conditioner, GpModel};
use crate::kernels::DerivSpec;
use crate::linalg::cholesky_jittered;
use crate::sampling::{RngStream, SampleBatch};

/// How one value draw per derivative sample is generated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DrawMode {
    /// Independent per-point draws with the exact conditional marginals.
    Marginal,
    /// Joint draws over all prediction points (dense Cholesky).
    Joint,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictOptions {
    pub mode: DrawMode,
    pub level: f64,
    /// Prediction points per work unit in marginal mode.
    pub chunk: usize,
}

impl Default for PredictOptions {
    fn default() -> Self {
        PredictOptions {
            mode: DrawMode::Marginal,
            level: 0.95,
            chunk: 128,
        }
    }
}

/// Per-point summaries of value draws.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueSummary {
    pub mean: DVector<f64>,
    pub lower: DVector<f64>,
    pub upper: DVector<f64>,
    /// Sample-averaged squared error per point, when a truth was given.
    pub mse: Option<f64>,
    /// Mean credible-interval width over points.
    pub ci_width: f64,
    pub n_samples: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConstrainedPrediction {
    /// One row per derivative sample.
    pub samples: DMatrix<f64>,
    pub summary: ValueSummary,
}

/// Nonnegative derivative values of a batch: identity for the truncated and
/// RLRTO methods, ReLU for the ReLU-likelihood methods.
pub fn constrained_derivatives(batch: &SampleBatch) -> DMatrix<f64> {
    if batch.method.starts_with("relu") {
        batch.draws.map(|v| v.max(0.0))
    } else {
        batch.draws.clone()
    }
}

/// Affine-Gaussian push-forward from observation vectors to value draws.
struct Pushforward {
    cond: Conditioner,
    /// Observation vectors minus their prior means, one per row; a single
    /// row is shared by every draw.
    centered: DMatrix<f64>,
    n_draws: usize,
    jitter: f64,
}

impl Pushforward {
    fn draws(&self, u: &DMatrix<f64>, stream: &RngStream, mode: DrawMode) -> Result<DMatrix<f64>> {
        let c = u.nrows();
        let lp = self.cond.linear_predictor(u, &vec![DerivSpec::Value; c])?;
        let base = &self.centered * lp.gain.transpose();
        let shared = base.nrows() == 1;
        let mut r = stream.rng();
        let mut out = DMatrix::zeros(self.n_draws, c);
        match mode {
            DrawMode::Marginal => {
                let sd: Vec<f64> = (0..c).map(|j| lp.cov[(j, j)].max(0.0).sqrt()).collect();
                for i in 0..self.n_draws {
                    let b = if shared { 0 } else { i };
                    for j in 0..c {
                        let z: f64 = StandardNormal.sample(&mut r);
                        out[(i, j)] = lp.prior_mean[j] + base[(b, j)] + sd[j] * z;
                    }
                }
            }
            DrawMode::Joint => {
                let l = cholesky_jittered(lp.cov.clone(), self.jitter, "conditional value covariance")?.l();
                for i in 0..self.n_draws {
                    let b = if shared { 0 } else { i };
                    let z = DVector::from_fn(c, |_, _| StandardNormal.sample(&mut r));
                    let lz = &l * z;
                    for j in 0..c {
                        out[(i, j)] = lp.prior_mean[j] + base[(b, j)] + lz[j];
                    }
                }
            }
        }
        Ok(out)
    }
}

struct ChunkResult {
    start: usize,
    draws: Option<DMatrix<f64>>,
    mean: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    sse: f64,
}

fn run_chunks(
    push: &Pushforward,
    u: &DMatrix<f64>,
    rng: &RngStream,
    opts: &PredictOptions,
    truth: Option<&[f64]>,
    keep: bool,
) -> Result<(ValueSummary, Option<DMatrix<f64>>)> {
    if push.n_draws < MIN_CI_SAMPLES {
        return Err(Error::arg(format!("at least {MIN_CI_SAMPLES} draws are needed for credible intervals")));
    }
    if let Some(t) = truth {
        if t.len() != u.nrows() {
            return Err(Error::arg("truth length does not match the prediction points"));
        }
    }
    let total = u.nrows();
    let size = match opts.mode {
        DrawMode::Joint => total.max(1),
        DrawMode::Marginal => opts.chunk.max(1),
    };
    let starts: Vec<usize> = (0..total).step_by(size).collect();
    let results: Vec<Result<ChunkResult>> = starts
        .par_iter()
        .enumerate()
        .map(|(k, &start)| {
            let len = size.min(total - start);
            let block = u.rows(start, len).into_owned();
            let d = push.draws(&block, &rng.substream(k as u64), opts.mode)?;
            let mut res = ChunkResult {
                start,
                draws: None,
                mean: Vec::with_capacity(len),
                lower: Vec::with_capacity(len),
                upper: Vec::with_capacity(len),
                sse: 0.0,
            };
            for j in 0..len {
                let col: Vec<f64> = d.column(j).iter().copied().collect();
                let (lo, hi) = interval(&col, opts.level);
                res.mean.push(col.iter().sum::<f64>() / col.len() as f64);
                res.lower.push(lo);
                res.upper.push(hi);
                if let Some(t) = truth {
                    res.sse += col.iter().map(|v| (v - t[start + j]).powi(2)).sum::<f64>();
                }
            }
            if keep {
                res.draws = Some(d);
            }
            Ok(res)
        })
        .collect();
    let mut mean = DVector::zeros(total);
    let mut lower = DVector::zeros(total);
    let mut upper = DVector::zeros(total);
    let mut sse = 0.0;
    let mut samples = keep.then(|| DMatrix::zeros(push.n_draws, total));
    for r in results {
        let r = r?;
        for j in 0..r.mean.len() {
            mean[r.start + j] = r.mean[j];
            lower[r.start + j] = r.lower[j];
            upper[r.start + j] = r.upper[j];
        }
        sse += r.sse;
        if let (Some(all), Some(d)) = (samples.as_mut(), r.draws) {
            all.columns_mut(r.start, d.ncols()).copy_from(&d);
        }
    }
    let ci_width = if total > 0 { (&upper - &lower).sum() / total as f64 } else { 0.0 };
    let summary = ValueSummary {
        mean,
        lower,
        upper,
        mse: truth.map(|_| sse / (push.n_draws * total.max(1)) as f64),
        ci_width,
        n_samples: push.n_draws,
    };
    Ok((summary, samples))
}

fn constrained_push(prob: &ConstrainedProblem, f_t: &DVector<f64>, batch: &SampleBatch) -> Result<Pushforward> {
    prob.check_values(f_t)?;
    if batch.dim() != prob.n_virtual() {
        return Err(Error::arg("batch width does not match the virtual design"));
    }
    if batch.is_empty() {
        return Err(Error::arg("empty sample batch"));
    }
    let model = &prob.model;
    let (points, specs) = stack(
        &model.data.inputs,
        &model.data.value_specs(),
        &prob.design.points,
        &prob.design.specs,
    )?;
    let cond = Conditioner::with_diagonal(&model.params, model.mean_const, points, specs, &model.training_diagonal())?;
    let derivs = constrained_derivatives(batch);
    let n = f_t.len();
    let m = prob.n_virtual();
    let centered = DMatrix::from_fn(batch.len(), n + m, |i, j| {
        if j < n {
            f_t[j] - model.mean_const
        } else {
            derivs[(i, j - n)]
        }
    });
    Ok(Pushforward {
        cond,
        centered,
        n_draws: batch.len(),
        jitter: model.params.jitter(),
    })
}

/// One value draw at `u` per derivative sample, with summaries.
pub fn predict_constrained(
    prob: &ConstrainedProblem,
    f_t: &DVector<f64>,
    batch: &SampleBatch,
    u: &DMatrix<f64>,
    rng: &RngStream,
    opts: &PredictOptions,
) -> Result<ConstrainedPrediction> {
    let push = constrained_push(prob, f_t, batch)?;
    let (summary, samples) = run_chunks(&push, u, rng, opts, None, true)?;
    Ok(ConstrainedPrediction {
        samples: samples.expect("samples kept"),
        summary,
    })
}

/// As [`predict_constrained`] but keeps only the summaries; the error
/// against `truth` is accumulated on the fly.
pub fn summarize_constrained(
    prob: &ConstrainedProblem,
    f_t: &DVector<f64>,
    batch: &SampleBatch,
    u: &DMatrix<f64>,
    rng: &RngStream,
    opts: &PredictOptions,
    truth: Option<&[f64]>,
) -> Result<ValueSummary> {
    let push = constrained_push(prob, f_t, batch)?;
    Ok(run_chunks(&push, u, rng, opts, truth, false)?.0)
}

/// Summaries of `n_draws` draws from the unconstrained posterior at `u`.
pub fn summarize_unconstrained(
    model: &GpModel,
    n_draws: usize,
    u: &DMatrix<f64>,
    rng: &RngStream,
    opts: &PredictOptions,
    truth: Option<&[f64]>,
) -> Result<ValueSummary> {
    let centered = model.data.values.add_scalar(-model.mean_const).transpose();
    let push = Pushforward {
        cond: model.conditioner().clone(),
        centered: DMatrix::from_row_slice(1, centered.len(), centered.as_slice()),
        n_draws,
        jitter: model.params.jitter(),
    };
    Ok(run_chunks(&push, u, rng, opts, truth, false)?.0)
}
