//! Machine-readable outputs: metrics CSV, predictions JSON and a run
//! manifest.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::config::ExperimentConfig;
use super::run::{RunOutput, SamplerStats};
use crate::error::{Error, Result};

pub const METRICS_HEADER: [&str; 9] = [
    "experiment",
    "method",
    "n_virtual",
    "mse",
    "ci_width",
    "iat",
    "ess_per_sec",
    "runtime_s",
    "seed",
];

pub const METRICS_FILE: &str = "metrics.csv";
pub const PREDICTIONS_FILE: &str = "predictions.json";
pub const MANIFEST_FILE: &str = "manifest.json";

/// One metrics table row; `None` is written as `NA`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub experiment: String,
    pub method: String,
    pub n_virtual: usize,
    pub mse: Option<f64>,
    pub ci_width: Option<f64>,
    pub iat: Option<f64>,
    pub ess_per_sec: Option<f64>,
    pub runtime_s: Option<f64>,
    pub seed: u64,
}

impl MetricsRow {
    pub fn from_run(out: &RunOutput) -> Self {
        let c = &out.config;
        MetricsRow {
            experiment: c.experiment.to_string(),
            method: c.method.to_string(),
            n_virtual: c.effective_n_virtual(),
            mse: Some(out.report.mse).filter(|v| v.is_finite()),
            ci_width: Some(out.report.mean_ci_width),
            iat: out.report.mean_iat,
            ess_per_sec: out.report.ess_per_second,
            runtime_s: out.report.runtime_seconds,
            seed: c.seed,
        }
    }

    /// Row of a run that failed: identifiers only.
    pub fn failed(cfg: &ExperimentConfig) -> Self {
        MetricsRow {
            experiment: cfg.experiment.to_string(),
            method: cfg.method.to_string(),
            n_virtual: cfg.effective_n_virtual(),
            mse: None,
            ci_width: None,
            iat: None,
            ess_per_sec: None,
            runtime_s: None,
            seed: cfg.seed,
        }
    }

    pub fn sort_key(&self) -> (String, String, usize, u64) {
        (self.experiment.clone(), self.method.clone(), self.n_virtual, self.seed)
    }

    fn record(&self) -> Vec<String> {
        let num = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |x| format!("{x:e}"));
        vec![
            self.experiment.clone(),
            self.method.clone(),
            self.n_virtual.to_string(),
            num(self.mse),
            num(self.ci_width),
            num(self.iat),
            num(self.ess_per_sec),
            num(self.runtime_s),
            self.seed.to_string(),
        ]
    }

    fn from_record(r: &csv::StringRecord) -> Result<Self> {
        let bad = |what: &str| Error::Config(format!("malformed metrics row ({what}): {r:?}"));
        if r.len() != METRICS_HEADER.len() {
            return Err(bad("column count"));
        }
        let num = |i: usize| -> Result<Option<f64>> {
            match &r[i] {
                "NA" => Ok(None),
                s => s.parse().map(Some).map_err(|_| bad(METRICS_HEADER[i])),
            }
        };
        Ok(MetricsRow {
            experiment: r[0].to_string(),
            method: r[1].to_string(),
            n_virtual: r[2].parse().map_err(|_| bad("n_virtual"))?,
            mse: num(3)?,
            ci_width: num(4)?,
            iat: num(5)?,
            ess_per_sec: num(6)?,
            runtime_s: num(7)?,
            seed: r[8].parse().map_err(|_| bad("seed"))?,
        })
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.display().to_string(),
        source,
    }
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    Error::Io {
        path: path.display().to_string(),
        source: std::io::Error::other(e.to_string()),
    }
}

pub fn metrics_csv(rows: &[MetricsRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let wrap = |e: csv::Error| csv_err(Path::new("<memory>"), e);
    w.write_record(METRICS_HEADER).map_err(wrap)?;
    for r in rows {
        w.write_record(r.record()).map_err(wrap)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Numerical(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn write_metrics_csv(path: &Path, rows: &[MetricsRow]) -> Result<()> {
    fs::write(path, metrics_csv(rows)?).map_err(io_err(path))
}

pub fn read_metrics_csv(path: &Path) -> Result<Vec<MetricsRow>> {
    let mut rd = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let header = rd.headers().map_err(|e| csv_err(path, e))?.clone();
    if header.iter().ne(METRICS_HEADER.iter().copied()) {
        return Err(Error::Config(format!("{} does not have the metrics header", path.display())));
    }
    rd.records()
        .map(|r| MetricsRow::from_record(&r.map_err(|e| csv_err(path, e))?))
        .collect()
}

/// Per-point predictive summaries on the test grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Predictions {
    pub experiment: String,
    pub method: String,
    pub n_virtual: usize,
    pub seed: u64,
    pub level: f64,
    pub points: Vec<Vec<f64>>,
    pub mean: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub truth: Vec<f64>,
}

impl Predictions {
    pub fn from_run(out: &RunOutput) -> Self {
        let c = &out.config;
        let p = &out.test_points;
        Predictions {
            experiment: c.experiment.to_string(),
            method: c.method.to_string(),
            n_virtual: c.effective_n_virtual(),
            seed: c.seed,
            level: c.level,
            points: (0..p.nrows()).map(|i| p.row(i).iter().copied().collect()).collect(),
            mean: out.summary.mean.iter().copied().collect(),
            lower: out.summary.lower.iter().copied().collect(),
            upper: out.summary.upper.iter().copied().collect(),
            truth: out.truth.clone(),
        }
    }
}

/// Check a predictions document: required fields with the right types,
/// equal-length per-point arrays, a consistent point dimension, and
/// `lower <= mean <= upper` at every point.
pub fn validate_predictions(doc: &Value) -> Result<()> {
    let bad = |msg: String| Err(Error::Config(format!("invalid predictions document: {msg}")));
    let obj = match doc.as_object() {
        Some(o) => o,
        None => return bad("not an object".into()),
    };
    for key in ["experiment", "method"] {
        if !obj.get(key).is_some_and(Value::is_string) {
            return bad(format!("'{key}' must be a string"));
        }
    }
    for key in ["n_virtual", "seed"] {
        if !obj.get(key).is_some_and(Value::is_u64) {
            return bad(format!("'{key}' must be a nonnegative integer"));
        }
    }
    match obj.get("level").and_then(Value::as_f64) {
        Some(l) if l > 0.0 && l < 1.0 => {}
        _ => return bad("'level' must be a number in (0, 1)".into()),
    }
    let numbers = |key: &str| -> Option<Vec<f64>> {
        obj.get(key)?.as_array()?.iter().map(Value::as_f64).collect()
    };
    let points: Option<Vec<Vec<f64>>> = obj
        .get("points")
        .and_then(Value::as_array)
        .and_then(|rows| rows.iter().map(|r| r.as_array()?.iter().map(Value::as_f64).collect()).collect());
    let Some(points) = points else {
        return bad("'points' must be an array of number arrays".into());
    };
    if let Some(first) = points.first() {
        if first.is_empty() || points.iter().any(|p| p.len() != first.len()) {
            return bad("points must share one nonzero dimension".into());
        }
    }
    let mut cols = Vec::new();
    for key in ["mean", "lower", "upper", "truth"] {
        match numbers(key) {
            Some(v) if v.len() == points.len() => cols.push(v),
            Some(_) => return bad(format!("'{key}' length differs from the number of points")),
            None => return bad(format!("'{key}' must be an array of numbers")),
        }
    }
    for i in 0..points.len() {
        if !(cols[1][i] <= cols[0][i] && cols[0][i] <= cols[2][i]) {
            return bad(format!("interval does not contain the mean at point {i}"));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config: ExperimentConfig,
    pub package: String,
    pub version: String,
    pub seed: u64,
    pub wall_clock_seconds: f64,
    pub kernel_variance: f64,
    pub kernel_lengthscales: Vec<f64>,
    pub mean_const: f64,
    pub n_observations: usize,
    pub n_test_points: usize,
    pub virtual_points: Option<Vec<Vec<f64>>>,
    pub sampler: Option<SamplerStats>,
}

impl Manifest {
    pub fn from_run(out: &RunOutput) -> Self {
        Manifest {
            config: out.config.clone(),
            package: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed: out.config.seed,
            wall_clock_seconds: out.wall_seconds,
            kernel_variance: out.params.variance(),
            kernel_lengthscales: out.params.lengthscales().to_vec(),
            mean_const: out.mean_const,
            n_observations: out.n_observations,
            n_test_points: out.test_points.nrows(),
            virtual_points: out
                .virtual_points
                .as_ref()
                .map(|d| (0..d.len()).map(|i| d.points.row(i).iter().copied().collect()).collect()),
            sampler: out.sampler.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArtifactPaths {
    pub metrics: PathBuf,
    pub predictions: PathBuf,
    pub manifest: PathBuf,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Numerical(e.to_string()))?;
    fs::write(path, text + "\n").map_err(io_err(path))
}

/// Write the three artifacts of one run into `dir` (created if needed).
pub fn emit_artifacts(out: &RunOutput, dir: &Path) -> Result<ArtifactPaths> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let paths = ArtifactPaths {
        metrics: dir.join(METRICS_FILE),
        predictions: dir.join(PREDICTIONS_FILE),
        manifest: dir.join(MANIFEST_FILE),
    };
    write_metrics_csv(&paths.metrics, &[MetricsRow::from_run(out)])?;
    write_json(&paths.predictions, &Predictions::from_run(out))?;
    write_json(&paths.manifest, &Manifest::from_run(out))?;
    Ok(paths)
}

/// Metrics rows under `dir`: the suite summary when present, otherwise
/// every per-run metrics file found recursively. Sorted by identifiers.
pub fn collect_metrics(dir: &Path) -> Result<Vec<MetricsRow>> {
    let summary = dir.join(super::suite::SUMMARY_FILE);
    let mut rows = if summary.is_file() {
        read_metrics_csv(&summary)?
    } else {
        let mut files = Vec::new();
        find_files(dir, METRICS_FILE, &mut files)?;
        let mut rows = Vec::new();
        for f in files {
            rows.extend(read_metrics_csv(&f)?);
        }
        rows
    };
    if rows.is_empty() {
        return Err(Error::Config(format!("no metrics found under {}", dir.display())));
    }
    rows.sort_by_key(MetricsRow::sort_key);
    Ok(rows)
}

fn find_files(dir: &Path, name: &str, out: &mut Vec<PathBuf>) -> Result<()> {
    let mut entries: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io_err(dir))?
        .map(|e| e.map(|e| e.path()).map_err(io_err(dir)))
        .collect::<Result<_>>()?;
    entries.sort();
    for p in entries {
        if p.is_dir() {
            find_files(&p, name, out)?;
        } else if p.file_name().is_some_and(|n| n == name) {
            out.push(p);
        }
    }
    Ok(())
}

/// Render rows as CSV or as a JSON array.
pub fn render_report(rows: &[MetricsRow], format: &str) -> Result<String> {
    match format {
        "csv" => metrics_csv(rows),
        "json" => serde_json::to_string_pretty(rows)
            .map(|s| s + "\n")
            .map_err(|e| Error::Numerical(e.to_string())),
        other => Err(Error::Config(format!("unknown report format '{other}'; expected csv or json"))),
    }
}
