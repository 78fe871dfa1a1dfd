//! Grids of runs over experiments, methods and virtual-point counts.

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::artifacts::{emit_artifacts, write_metrics_csv, MetricsRow};
use super::config::{ExperimentConfig, SuiteConfig};
use super::run::{run_experiment, SettingCache};
use crate::error::{Error, Result};

pub const SUMMARY_FILE: &str = "summary.csv";
pub const SUITE_MANIFEST_FILE: &str = "suite_manifest.json";

/// Row configurations of a suite: one unconstrained row per experiment and
/// one row per virtual count for every constrained method, sorted by
/// (experiment, method, n_virtual).
pub fn suite_rows(cfg: &SuiteConfig) -> Vec<ExperimentConfig> {
    let mut rows = Vec::new();
    for &experiment in &cfg.experiments {
        for &method in &cfg.methods {
            let counts: &[usize] = if method.is_constrained() { &cfg.virtual_counts } else { &[0] };
            for &n_virtual in counts {
                rows.push(ExperimentConfig {
                    experiment,
                    method,
                    n_virtual,
                    ..cfg.base.clone()
                });
            }
        }
    }
    rows.sort_by(|a, b| {
        (a.experiment.as_str(), a.method.as_str(), a.effective_n_virtual())
            .cmp(&(b.experiment.as_str(), b.method.as_str(), b.effective_n_virtual()))
    });
    rows.dedup_by(|a, b| a.label() == b.label());
    rows
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteRow {
    pub label: String,
    pub metrics: MetricsRow,
    /// Failure message of a run that did not complete.
    pub error: Option<String>,
    pub wall_clock_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteResult {
    pub config: SuiteConfig,
    pub rows: Vec<SuiteRow>,
}

impl SuiteResult {
    pub fn failures(&self) -> usize {
        self.rows.iter().filter(|r| r.error.is_some()).count()
    }
}

fn run_row(cfg: &ExperimentConfig, cache: &SettingCache, out: Option<&Path>) -> SuiteRow {
    let label = cfg.label();
    let outcome = run_experiment(cfg, cache).and_then(|o| {
        if let Some(dir) = out {
            emit_artifacts(&o, &dir.join("runs").join(&label))?;
        }
        Ok(o)
    });
    match outcome {
        Ok(o) => SuiteRow {
            label,
            metrics: MetricsRow::from_run(&o),
            error: None,
            wall_clock_seconds: o.wall_seconds,
        },
        Err(e) => SuiteRow {
            label,
            metrics: MetricsRow::failed(cfg),
            error: Some(e.to_string()),
            wall_clock_seconds: 0.0,
        },
    }
}

/// Run every row; individual failures are recorded and the suite goes on.
/// With an output directory, per-row artifacts go to `runs/<label>/` and
/// the table to `summary.csv`.
pub fn run_suite(cfg: &SuiteConfig, out: Option<&Path>, cache: &SettingCache) -> Result<SuiteResult> {
    cfg.base.validate_shared()?;
    let rows = suite_rows(cfg);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs)
        .build()
        .map_err(|e| Error::Config(e.to_string()))?;
    // fit each experiment once, concurrently, before any row is timed
    pool.install(|| {
        cfg.experiments.par_iter().for_each(|&id| {
            // failures resurface per row
            let _ = cache.get(id, cfg.base.seed, cfg.base.noise_sd, cfg.base.noise_model);
        })
    });
    let results: Vec<SuiteRow> = if cfg.jobs > 1 {
        pool.install(|| rows.par_iter().map(|r| run_row(r, cache, out)).collect())
    } else {
        rows.iter().map(|r| run_row(r, cache, out)).collect()
    };
    let result = SuiteResult {
        config: cfg.clone(),
        rows: results,
    };
    if let Some(dir) = out {
        fs::create_dir_all(dir).map_err(|source| Error::Io {
            path: dir.display().to_string(),
            source,
        })?;
        let table: Vec<MetricsRow> = result.rows.iter().map(|r| r.metrics.clone()).collect();
        write_metrics_csv(&dir.join(SUMMARY_FILE), &table)?;
        let path = dir.join(SUITE_MANIFEST_FILE);
        let text = serde_json::to_string_pretty(&result).map_err(|e| Error::Numerical(e.to_string()))?;
        fs::write(&path, text + "\n").map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
    }
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::{ExperimentId, Method};

    #[test]
    fn full_grid_has_186_sorted_rows() {
        let rows = suite_rows(&SuiteConfig::default());
        assert_eq!(rows.len(), 186);
        let keys: Vec<(String, String, usize)> = rows
            .iter()
            .map(|r| (r.experiment.to_string(), r.method.to_string(), r.effective_n_virtual()))
            .collect();
        let mut sorted = keys.clone();
        sorted.sort();
        assert_eq!(keys, sorted);
        assert_eq!(rows.iter().filter(|r| r.method == Method::Unconstrained).count(), 6);
    }

    #[test]
    fn small_suite_records_failures_and_continues() {
        let cfg = SuiteConfig {
            base: ExperimentConfig {
                n_samples: 300,
                burn_in: 50,
                seed: 3,
                ..ExperimentConfig::default()
            },
            experiments: vec![ExperimentId::OneD1],
            methods: vec![Method::Unconstrained, Method::Rlrto],
            // 5 is not an allowed count for synthetic runs
            virtual_counts: vec![4, 5],
            jobs: 2,
        };
        let dir = tempfile::tempdir().unwrap();
        let res = run_suite(&cfg, Some(dir.path()), &SettingCache::new()).unwrap();
        assert_eq!(res.rows.len(), 3);
        assert_eq!(res.failures(), 1);
        let summary = crate::harness::artifacts::read_metrics_csv(&dir.path().join(SUMMARY_FILE)).unwrap();
        assert_eq!(summary.len(), 3);
        assert!(summary.iter().all(|r| r.seed == 3));
        assert!(dir.path().join("runs/1d-1_rlrto_v4_s3/predictions.json").is_file());
    }
}
