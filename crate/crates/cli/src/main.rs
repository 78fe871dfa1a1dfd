use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use monogp::harness::{
    collect_metrics, emit_artifacts, metrics_csv, render_report, run_experiment, run_suite, MetricsRow, RawConfig,
    SettingCache,
};
use monogp::Error;

/// Monotone Gaussian-process surrogates: single runs, benchmark suites and
/// metric reports.
#[derive(Parser, Debug)]
#[command(name = "monogp", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one experiment and print its metrics row.
    Run(RunArgs),
    /// Run a grid of experiments, methods and virtual-point counts.
    Suite(SuiteArgs),
    /// Collect metrics written by earlier runs.
    Report(ReportArgs),
}

#[derive(Args, Debug)]
struct RunArgs {
    /// Flat key = value configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    experiment: Option<String>,
    #[arg(long)]
    method: Option<String>,
    #[arg(long = "n-virtual")]
    n_virtual: Option<usize>,
    /// Total iterations, burn-in included.
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long = "burn-in")]
    burn_in: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// off | wall
    #[arg(long)]
    timing: Option<String>,
    #[arg(long = "noise-sd")]
    noise_sd: Option<f64>,
    /// none | known
    #[arg(long = "noise-model")]
    noise_model: Option<String>,
    /// Artifact directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SuiteArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Rows run concurrently.
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long = "burn-in")]
    burn_in: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    timing: Option<String>,
    #[arg(long = "noise-model")]
    noise_model: Option<String>,
}

#[derive(Args, Debug)]
struct ReportArgs {
    #[arg(long = "in")]
    input: PathBuf,
    /// csv | json
    #[arg(long, default_value = "csv")]
    format: String,
}

fn load(path: Option<&Path>) -> Result<RawConfig, Error> {
    path.map_or_else(|| Ok(RawConfig::default()), RawConfig::load)
}

fn set<T: ToString>(raw: &mut RawConfig, key: &str, value: &Option<T>) -> Result<(), Error> {
    if let Some(v) = value {
        raw.set(key, v.to_string())?;
    }
    Ok(())
}

fn cmd_run(a: &RunArgs) -> Result<(), Error> {
    let mut raw = load(a.config.as_deref())?;
    set(&mut raw, "experiment", &a.experiment)?;
    set(&mut raw, "method", &a.method)?;
    set(&mut raw, "n_virtual", &a.n_virtual)?;
    set(&mut raw, "samples", &a.samples)?;
    set(&mut raw, "burn_in", &a.burn_in)?;
    set(&mut raw, "seed", &a.seed)?;
    set(&mut raw, "timing", &a.timing)?;
    set(&mut raw, "noise_sd", &a.noise_sd)?;
    set(&mut raw, "noise_model", &a.noise_model)?;
    set(&mut raw, "out", &a.out.as_ref().map(|p| p.display().to_string()))?;
    let cfg = raw.experiment_config()?;
    let out = run_experiment(&cfg, &SettingCache::new())?;
    if let Some(dir) = &cfg.out_dir {
        let paths = emit_artifacts(&out, dir)?;
        eprintln!("artifacts written to {}", paths.metrics.parent().unwrap_or(dir).display());
    }
    print!("{}", metrics_csv(&[MetricsRow::from_run(&out)])?);
    Ok(())
}

/// Returns the number of failed rows.
fn cmd_suite(a: &SuiteArgs) -> Result<usize, Error> {
    let mut raw = load(a.config.as_deref())?;
    set(&mut raw, "jobs", &a.jobs)?;
    set(&mut raw, "samples", &a.samples)?;
    set(&mut raw, "burn_in", &a.burn_in)?;
    set(&mut raw, "seed", &a.seed)?;
    set(&mut raw, "timing", &a.timing)?;
    set(&mut raw, "noise_model", &a.noise_model)?;
    let cfg = raw.suite_config()?;
    let res = run_suite(&cfg, Some(&a.out), &SettingCache::new())?;
    for row in res.rows.iter().filter(|r| r.error.is_some()) {
        eprintln!("{} failed: {}", row.label, row.error.as_deref().unwrap_or(""));
    }
    eprintln!(
        "{} rows, {} failed; summary in {}",
        res.rows.len(),
        res.failures(),
        a.out.display()
    );
    Ok(res.failures())
}

fn cmd_report(a: &ReportArgs) -> Result<(), Error> {
    let rows = collect_metrics(&a.input)?;
    print!("{}", render_report(&rows, &a.format)?);
    Ok(())
}

fn exit_code(e: &Error) -> ExitCode {
    if e.is_config() || matches!(e.root(), Error::Io { .. }) {
        ExitCode::from(1)
    } else {
        ExitCode::from(2)
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Suite(a) => cmd_suite(a).map(|failed| {
            if failed > 0 {
                std::process::exit(2);
            }
        }),
        Command::Report(a) => cmd_report(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
