//! Run configuration: a flat `key = value` file, with overrides applied on
//! top by the caller.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::constrained::DrawMode;
use crate::error::{Error, Result};

macro_rules! named_enum {
    ($(#[$m:meta])* $name:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        $(#[$m])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        pub enum $name { $($variant),+ }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn as_str(&self) -> &'static str {
                match self { $($name::$variant => $text),+ }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $name {
            type Err = Error;
            fn from_str(s: &str) -> Result<Self> {
                match s.trim() {
                    $($text => Ok($name::$variant),)+
                    other => Err(Error::Config(format!(
                        concat!("unknown ", stringify!($name), " '{}'; expected one of: {}"),
                        other,
                        [$($text),+].join(", ")
                    ))),
                }
            }
        }
    };
}

named_enum!(
    /// Benchmark or application identifier.
    ExperimentId {
        OneD1 => "1d-1",
        OneD2 => "1d-2",
        OneD3 => "1d-3",
        TwoD1 => "2d-1",
        TwoD2 => "2d-2",
        TwoD3 => "2d-3",
        Sir => "sir",
        ConvDiff => "convdiff",
    }
);

named_enum!(
    Method {
        Unconstrained => "unconstrained",
        TruncatedGibbs => "truncated-gibbs",
        TruncatedNuts => "truncated-nuts",
        ReluGibbs => "relu-gibbs",
        ReluNuts => "relu-nuts",
        Rlrto => "rlrto",
    }
);

named_enum!(
    /// Whether wall-clock quantities enter the metrics table. With `off`
    /// the runtime and ESS/sec columns are NA and metrics files are
    /// reproducible byte for byte.
    Timing {
        Off => "off",
        Wall => "wall",
    }
);

named_enum!(
    /// How training values enter the model: interpolated exactly (`none`)
    /// or with their known noise variance as a fixed nugget (`known`).
    NoiseModel {
        Interpolate => "none",
        Known => "known",
    }
);

impl ExperimentId {
    pub const SYNTHETIC: &'static [ExperimentId] = &[
        ExperimentId::OneD1,
        ExperimentId::OneD2,
        ExperimentId::OneD3,
        ExperimentId::TwoD1,
        ExperimentId::TwoD2,
        ExperimentId::TwoD3,
    ];

    pub fn is_synthetic(&self) -> bool {
        !matches!(self, ExperimentId::Sir | ExperimentId::ConvDiff)
    }
}

impl Method {
    pub fn is_constrained(&self) -> bool {
        *self != Method::Unconstrained
    }

    /// Methods whose draws are independent (no burn-in).
    pub fn is_independent(&self) -> bool {
        matches!(self, Method::Unconstrained | Method::Rlrto)
    }
}

pub const VIRTUAL_COUNTS: [usize; 6] = [4, 8, 16, 32, 64, 128];

/// One end-to-end run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub experiment: ExperimentId,
    pub method: Method,
    /// Ignored (reported as 0) for unconstrained runs.
    pub n_virtual: usize,
    /// Total iterations including burn-in.
    pub n_samples: usize,
    pub burn_in: usize,
    pub seed: u64,
    pub out_dir: Option<PathBuf>,
    pub timing: Timing,
    /// Replaces the observation noise level of the experiment.
    pub noise_sd: Option<f64>,
    pub noise_model: NoiseModel,
    pub level: f64,
    pub draw_mode: DrawMode,
    pub chunk: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            experiment: ExperimentId::OneD1,
            method: Method::Rlrto,
            n_virtual: 32,
            n_samples: 5000,
            burn_in: 500,
            seed: 0,
            out_dir: None,
            timing: Timing::Off,
            noise_sd: None,
            noise_model: NoiseModel::Interpolate,
            level: 0.95,
            draw_mode: DrawMode::Marginal,
            chunk: 128,
        }
    }
}

impl ExperimentConfig {
    /// Burn-in actually applied: zero for independent samplers.
    pub fn effective_burn_in(&self) -> usize {
        if self.method.is_independent() {
            0
        } else {
            self.burn_in
        }
    }

    /// Virtual-point count as reported: zero for unconstrained runs.
    pub fn effective_n_virtual(&self) -> usize {
        if self.method.is_constrained() {
            self.n_virtual
        } else {
            0
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.method.is_constrained() {
            if self.experiment.is_synthetic() && !VIRTUAL_COUNTS.contains(&self.n_virtual) {
                return Err(Error::Config(format!(
                    "n_virtual must be one of {VIRTUAL_COUNTS:?} for synthetic experiments, got {}",
                    self.n_virtual
                )));
            }
            if self.n_virtual == 0 {
                return Err(Error::Config("n_virtual must be positive".into()));
            }
        }
        self.validate_shared()
    }

    /// Checks that do not depend on the method or virtual-point count.
    pub fn validate_shared(&self) -> Result<()> {
        if self.n_samples < self.effective_burn_in() {
            return Err(Error::Config("n_samples must be at least burn_in".into()));
        }
        if self.n_samples - self.effective_burn_in() < crate::diagnostics::MIN_CI_SAMPLES {
            return Err(Error::Config(format!(
                "at least {} kept samples are needed",
                crate::diagnostics::MIN_CI_SAMPLES
            )));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(Error::Config("level must lie in (0, 1)".into()));
        }
        if let Some(sd) = self.noise_sd {
            if !(sd >= 0.0) || !sd.is_finite() {
                return Err(Error::Config("noise_sd must be a nonnegative number".into()));
            }
        }
        if self.chunk == 0 {
            return Err(Error::Config("chunk must be positive".into()));
        }
        Ok(())
    }

    /// Row label used for per-run artifact directories.
    pub fn label(&self) -> String {
        format!(
            "{}_{}_v{}_s{}",
            self.experiment,
            self.method,
            self.effective_n_virtual(),
            self.seed
        )
    }
}

/// Grid of runs for `suite`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteConfig {
    /// Settings shared by every row (experiment, method and n_virtual are
    /// overwritten per row).
    pub base: ExperimentConfig,
    pub experiments: Vec<ExperimentId>,
    pub methods: Vec<Method>,
    pub virtual_counts: Vec<usize>,
    /// Rows run concurrently; 1 keeps timings comparable.
    pub jobs: usize,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        SuiteConfig {
            base: ExperimentConfig::default(),
            experiments: ExperimentId::SYNTHETIC.to_vec(),
            methods: Method::ALL.to_vec(),
            virtual_counts: VIRTUAL_COUNTS.to_vec(),
            jobs: 1,
        }
    }
}

/// Parsed `key = value` pairs. Blank lines and `#` comments are skipped.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RawConfig {
    entries: BTreeMap<String, String>,
}

const KNOWN_KEYS: &[&str] = &[
    "experiment",
    "method",
    "n_virtual",
    "samples",
    "burn_in",
    "seed",
    "out",
    "timing",
    "noise_sd",
    "noise_model",
    "level",
    "draw_mode",
    "chunk",
    "experiments",
    "methods",
    "virtual_counts",
    "jobs",
];

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
            let key = k.trim().replace('-', "_");
            if !KNOWN_KEYS.contains(&key.as_str()) {
                return Err(Error::Config(format!("line {}: unknown key '{}'", n + 1, k.trim())));
            }
            if entries.insert(key, v.trim().to_string()).is_some() {
                return Err(Error::Config(format!("line {}: duplicate key '{}'", n + 1, k.trim())));
            }
        }
        Ok(RawConfig { entries })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        RawConfig::parse(&text)
    }

    /// Set (or replace) a key, as a command-line flag would.
    pub fn set(&mut self, key: &str, value: impl Into<String>) -> Result<()> {
        let key = key.replace('-', "_");
        if !KNOWN_KEYS.contains(&key.as_str()) {
            return Err(Error::Config(format!("unknown key '{key}'")));
        }
        self.entries.insert(key, value.into());
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    fn parsed<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        self.get(key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|_| Error::Config(format!("cannot parse {key} = '{v}'")))
            })
            .transpose()
    }

    fn list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>> {
        self.get(key)
            .map(|v| {
                v.split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|s| s.parse::<T>().map_err(|_| Error::Config(format!("cannot parse '{s}' in {key}"))))
                    .collect()
            })
            .transpose()
    }

    pub fn experiment_config(&self) -> Result<ExperimentConfig> {
        let mut c = ExperimentConfig::default();
        if let Some(v) = self.get("experiment") {
            c.experiment = v.parse()?;
        }
        if let Some(v) = self.get("method") {
            c.method = v.parse()?;
        }
        if let Some(v) = self.parsed("n_virtual")? {
            c.n_virtual = v;
        }
        if let Some(v) = self.parsed("samples")? {
            c.n_samples = v;
        }
        if let Some(v) = self.parsed("burn_in")? {
            c.burn_in = v;
        }
        if let Some(v) = self.parsed("seed")? {
            c.seed = v;
        }
        if let Some(v) = self.get("out") {
            c.out_dir = Some(PathBuf::from(v));
        }
        if let Some(v) = self.get("timing") {
            c.timing = v.parse()?;
        }
        if let Some(v) = self.parsed("noise_sd")? {
            c.noise_sd = Some(v);
        }
        if let Some(v) = self.get("noise_model") {
            c.noise_model = v.parse()?;
        }
        if let Some(v) = self.parsed("level")? {
            c.level = v;
        }
        if let Some(v) = self.get("draw_mode") {
            c.draw_mode = match v {
                "marginal" => DrawMode::Marginal,
                "joint" => DrawMode::Joint,
                other => return Err(Error::Config(format!("unknown draw_mode '{other}'; expected marginal or joint"))),
            };
        }
        if let Some(v) = self.parsed("chunk")? {
            c.chunk = v;
        }
        Ok(c)
    }

    pub fn suite_config(&self) -> Result<SuiteConfig> {
        let mut s = SuiteConfig {
            base: self.experiment_config()?,
            ..SuiteConfig::default()
        };
        if let Some(v) = self.list("experiments")? {
            s.experiments = v;
        }
        if let Some(v) = self.list("methods")? {
            s.methods = v;
        }
        if let Some(v) = self.list("virtual_counts")? {
            s.virtual_counts = v;
        }
        if let Some(v) = self.parsed("jobs")? {
            s.jobs = v;
        }
        if s.experiments.is_empty() || s.methods.is_empty() || s.virtual_counts.is_empty() || s.jobs == 0 {
            return Err(Error::Config("suite lists and jobs must be nonempty".into()));
        }
        Ok(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_override() {
        let mut raw = RawConfig::parse(
            "# desk scale\nexperiment = 1d-3\nmethod = truncated-nuts\nn_virtual=64\nsamples = 2000 # total\nburn-in = 200\nseed = 7\ntiming = wall\n",
        )
        .unwrap();
        raw.set("seed", "9").unwrap();
        let c = raw.experiment_config().unwrap();
        assert_eq!(c.experiment, ExperimentId::OneD3);
        assert_eq!(c.method, Method::TruncatedNuts);
        assert_eq!((c.n_virtual, c.n_samples, c.burn_in, c.seed), (64, 2000, 200, 9));
        assert_eq!(c.timing, Timing::Wall);
        c.validate().unwrap();
        assert_eq!(c.label(), "1d-3_truncated-nuts_v64_s9");
    }

    #[test]
    fn rejects_bad_input() {
        assert!(RawConfig::parse("nonsense").unwrap_err().is_config());
        assert!(RawConfig::parse("colour = red").is_err());
        assert!(RawConfig::parse("seed = 1\nseed = 2").is_err());
        let raw = RawConfig::parse("method = magic").unwrap();
        assert!(raw.experiment_config().unwrap_err().is_config());
        let raw = RawConfig::parse("samples = lots").unwrap();
        assert!(raw.experiment_config().is_err());
        let c = ExperimentConfig { n_virtual: 10, ..ExperimentConfig::default() };
        assert!(c.validate().is_err());
        let c = ExperimentConfig { method: Method::ReluNuts, n_samples: 100, burn_in: 200, ..ExperimentConfig::default() };
        assert!(c.validate().is_err());
        // application runs accept any positive count
        let c = ExperimentConfig { experiment: ExperimentId::Sir, n_virtual: 10, ..ExperimentConfig::default() };
        c.validate().unwrap();
    }

    #[test]
    fn suite_lists() {
        let raw = RawConfig::parse("experiments = 1d-1, sir\nmethods = rlrto,unconstrained\nvirtual_counts = 4,8\njobs = 2").unwrap();
        let s = raw.suite_config().unwrap();
        assert_eq!(s.experiments, vec![ExperimentId::OneD1, ExperimentId::Sir]);
        assert_eq!(s.methods, vec![Method::Rlrto, Method::Unconstrained]);
        assert_eq!((s.virtual_counts.clone(), s.jobs), (vec![4, 8], 2));
        let d = RawConfig::default().suite_config().unwrap();
        assert_eq!((d.experiments.len(), d.methods.len(), d.virtual_counts.len()), (6, 6, 6));
    }

    #[test]
    fn names_round_trip() {
        for e in ExperimentId::ALL {
            assert_eq!(e.as_str().parse::<ExperimentId>().unwrap(), *e);
        }
        for m in Method::ALL {
            assert_eq!(m.to_string().parse::<Method>().unwrap(), *m);
        }
    }

    #[test]
    fn burn_in_only_binds_mcmc_methods() {
        let short = ExperimentConfig { n_samples: 100, ..ExperimentConfig::default() };
        assert!(short.validate().is_ok());
        let gibbs = ExperimentConfig { method: Method::TruncatedGibbs, ..short.clone() };
        assert!(gibbs.validate().unwrap_err().is_config());
        assert_eq!(gibbs.effective_burn_in(), 500);
        assert_eq!(short.effective_burn_in(), 0);
    }
}
