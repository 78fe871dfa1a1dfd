//! Experiment harness: configuration, benchmark definitions, end-to-end
//! runs, suites and their artifacts.

pub mod artifacts;
pub mod config;
pub mod experiments;
pub mod run;
pub mod suite;

pub use artifacts::{
    collect_metrics, emit_artifacts, metrics_csv, read_metrics_csv, render_report, validate_predictions, write_metrics_csv,
    ArtifactPaths, Manifest, MetricsRow, Predictions, METRICS_HEADER,
};
pub use config::{
    ExperimentConfig, ExperimentId, Method, NoiseModel, RawConfig, SuiteConfig, Timing, VIRTUAL_COUNTS,
};
pub use experiments::{
    build_setting, constrained_dims, experiment_dataset, generate_dataset, synthetic_spec, synthetic_truth,
    test_grid, truth_at, Setting, SyntheticSpec,
};
pub use run::{run_experiment, virtual_design, RunOutput, SamplerStats, SettingCache};
pub use suite::{run_suite, suite_rows, SuiteResult, SuiteRow};
