//! End-to-end runs: data, fit, virtual design, sampling, prediction and
//! metrics.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};
use std::time::Instant;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, ExperimentId, Method, NoiseModel, Timing};
use super::experiments::{build_setting, constrained_dims, Setting};
use crate::constrained::{
    build_problem, sample_relu_gibbs, sample_relu_nuts, sample_rlrto, sample_truncated_gibbs,
    sample_truncated_nuts, summarize_constrained, summarize_unconstrained, PredictOptions, RlrtoOptions,
    ValueSummary, VirtualDesign,
};
use crate::design::sobol_points;
use crate::diagnostics::{ess_per_second, mean_iat, MetricsReport, MIN_IAT_SAMPLES};
use crate::error::{Result, StageExt};
use crate::gp::GpModel;
use crate::kernels::KernelParams;
use crate::sampling::{NutsOptions, RngStream, SampleBatch};

type SettingKey = (ExperimentId, u64, Option<u64>, NoiseModel);

/// Data and fitted hyperparameters per (experiment, seed, noise override),
/// shared by every method run against them.
#[derive(Debug, Default)]
pub struct SettingCache {
    map: Mutex<HashMap<SettingKey, Arc<Setting>>>,
}

impl SettingCache {
    pub fn new() -> Self {
        SettingCache::default()
    }

    pub fn get(&self, id: ExperimentId, seed: u64, noise_sd: Option<f64>, noise_model: NoiseModel) -> Result<Arc<Setting>> {
        let key = (id, seed, noise_sd.map(f64::to_bits), noise_model);
        if let Some(s) = self.map.lock().expect("cache lock").get(&key) {
            return Ok(s.clone());
        }
        let built = Arc::new(build_setting(id, seed, noise_sd, noise_model)?);
        // a concurrent builder may have won; both results are identical
        Ok(self.map.lock().expect("cache lock").entry(key).or_insert(built).clone())
    }
}

/// Sampler statistics carried into the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerStats {
    pub method: String,
    pub kept: usize,
    pub burn_in: usize,
    pub seconds: f64,
    /// Draws whose solver hit its iteration cap.
    pub degraded: usize,
    pub accept_rate: Option<f64>,
    pub divergences: usize,
    pub divergence_flag: bool,
    pub step_size: Option<f64>,
    /// Derivative components whose chain never moved.
    pub flat_components: usize,
    /// Fraction of draws with at least one exactly-zero component.
    pub zero_fraction: f64,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub config: ExperimentConfig,
    pub report: MetricsReport,
    pub params: KernelParams,
    pub mean_const: f64,
    pub n_observations: usize,
    pub test_points: DMatrix<f64>,
    pub truth: Vec<f64>,
    pub summary: ValueSummary,
    pub virtual_points: Option<VirtualDesign>,
    pub sampler: Option<SamplerStats>,
    /// Raw derivative draws (constrained runs only).
    pub draws: Option<SampleBatch>,
    pub wall_seconds: f64,
}

/// Scrambled-Sobol virtual design; the scramble depends only on the seed
/// and experiment, so designs nest across counts and are shared by methods.
pub fn virtual_design(setting: &Setting, n_virtual: usize) -> Result<VirtualDesign> {
    let scramble = RngStream::new(setting.seed, 0).derive(&format!("virtual/{}", setting.experiment));
    let points = sobol_points(n_virtual, &setting.domain, Some(&scramble))?;
    VirtualDesign::round_robin(points, &constrained_dims(setting.experiment))
}

fn method_stream(cfg: &ExperimentConfig) -> RngStream {
    RngStream::new(cfg.seed, 0).derive(&format!("method/{}/{}/{}", cfg.experiment, cfg.method, cfg.n_virtual))
}

pub fn run_experiment(cfg: &ExperimentConfig, cache: &SettingCache) -> Result<RunOutput> {
    let wall = Instant::now();
    cfg.validate()?;
    let setting = cache.get(cfg.experiment, cfg.seed, cfg.noise_sd, cfg.noise_model)?;
    let model = GpModel::with_nugget(setting.params.clone(), setting.mean_const, setting.data.clone(), setting.nugget)
        .stage("model")?;
    let stream = method_stream(cfg);
    let popts = PredictOptions {
        mode: cfg.draw_mode,
        level: cfg.level,
        chunk: cfg.chunk,
    };
    let truth = Some(setting.truth.as_slice());
    let burn_in = cfg.effective_burn_in();

    if !cfg.method.is_constrained() {
        let summary = summarize_unconstrained(&model, cfg.n_samples, &setting.test_points, &stream.derive("predict"), &popts, truth)
            .stage("prediction")?;
        let report = MetricsReport {
            mse: summary.mse.unwrap_or(f64::NAN),
            mean_ci_width: summary.ci_width,
            mean_iat: None,
            ess_per_second: None,
            n_samples: cfg.n_samples,
            runtime_seconds: None,
        };
        return Ok(RunOutput {
            config: cfg.clone(),
            report,
            params: setting.params.clone(),
            mean_const: setting.mean_const,
            n_observations: setting.data.len(),
            test_points: setting.test_points.clone(),
            truth: setting.truth.clone(),
            summary,
            virtual_points: None,
            sampler: None,
            draws: None,
            wall_seconds: wall.elapsed().as_secs_f64(),
        });
    }

    let design = virtual_design(&setting, cfg.n_virtual).stage("virtual design")?;
    let prob = build_problem(&model, &design).stage("constrained problem")?;
    let f = &setting.data.values;
    let sstream = stream.derive("sample");
    let nuts = NutsOptions::default();
    let batch = match cfg.method {
        Method::TruncatedGibbs => sample_truncated_gibbs(&prob, f, cfg.n_samples, burn_in, &sstream),
        Method::TruncatedNuts => sample_truncated_nuts(&prob, f, cfg.n_samples, burn_in, &sstream, &nuts),
        Method::ReluGibbs => sample_relu_gibbs(&prob, f, cfg.n_samples, burn_in, &sstream),
        Method::ReluNuts => sample_relu_nuts(&prob, f, cfg.n_samples, burn_in, &sstream, &nuts),
        Method::Rlrto => sample_rlrto(&prob, f, cfg.n_samples, &sstream, &RlrtoOptions::default()),
        Method::Unconstrained => unreachable!(),
    }
    .stage("sampling")?;

    let summary = summarize_constrained(&prob, f, &batch, &setting.test_points, &stream.derive("predict"), &popts, truth)
        .stage("prediction")?;

    let kept = batch.len();
    let (iat, flat) = if kept >= MIN_IAT_SAMPLES {
        let (v, flat) = mean_iat(&batch.draws).stage("diagnostics")?;
        (Some(v), flat)
    } else {
        (None, 0)
    };
    let timed = cfg.timing == Timing::Wall;
    let ess = match (timed, iat) {
        (true, Some(t)) => ess_per_second(kept, t, batch.seconds.max(1e-9)).ok(),
        _ => None,
    };
    let zero_rows = (0..kept)
        .filter(|&i| batch.draws.row(i).iter().any(|&v| v == 0.0))
        .count();
    let report = MetricsReport {
        mse: summary.mse.unwrap_or(f64::NAN),
        mean_ci_width: summary.ci_width,
        mean_iat: iat,
        ess_per_second: ess,
        n_samples: kept,
        runtime_seconds: timed.then_some(batch.seconds),
    };
    let sampler = SamplerStats {
        method: batch.method.clone(),
        kept,
        burn_in: batch.burn_in,
        seconds: batch.seconds,
        degraded: batch.degraded,
        accept_rate: batch.accept_rate,
        divergences: batch.divergences,
        divergence_flag: batch.divergence_flag,
        step_size: batch.step_size,
        flat_components: flat,
        zero_fraction: zero_rows as f64 / kept.max(1) as f64,
    };
    Ok(RunOutput {
        config: cfg.clone(),
        report,
        params: setting.params.clone(),
        mean_const: setting.mean_const,
        n_observations: setting.data.len(),
        test_points: setting.test_points.clone(),
        truth: setting.truth.clone(),
        summary,
        virtual_points: Some(design),
        sampler: Some(sampler),
        draws: Some(batch),
        wall_seconds: wall.elapsed().as_secs_f64(),
    })
}
