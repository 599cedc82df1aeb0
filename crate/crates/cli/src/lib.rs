//! Configuration-driven experiment runner. Each experiment turns a
//! [`RunConfig`] into a set of artifacts (CSV, Markdown, tab-separated plot
//! data, JSON) plus a `manifest.json` from which the run can be replayed.

// `!(x > 0)`-style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod experiments;
pub mod output;
pub mod reference;

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

pub use config::{Experiment, Overrides, RunConfig};
pub use output::{Artifacts, Manifest};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] infonoise::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("output error: {0}")]
    Output(String),
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Output(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Output(e.to_string())
    }
}

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_INFEASIBLE: i32 = 4;

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Core(e) if e.is_infeasible() => EXIT_INFEASIBLE,
            CliError::Core(e) if e.is_numerical() => EXIT_NUMERICAL,
            CliError::Core(infonoise::Error::Io(_) | infonoise::Error::Csv(_)) => EXIT_IO,
            CliError::Core(_) => EXIT_CONFIG,
            CliError::Io(_) | CliError::Output(_) => EXIT_IO,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self.exit_code() {
            EXIT_CONFIG => "config",
            EXIT_NUMERICAL => "numerical",
            EXIT_INFEASIBLE => "infeasible",
            _ => "io",
        }
    }

    pub fn record(&self) -> ErrorRecord {
        ErrorRecord { status: "error", kind: self.kind(), exit_code: self.exit_code(), message: self.to_string() }
    }
}

/// Machine-readable failure report, printed to stderr and written to
/// `error.json` in the output directory when possible.
#[derive(Clone, Debug, Serialize)]
pub struct ErrorRecord {
    pub status: &'static str,
    pub kind: &'static str,
    pub exit_code: i32,
    pub message: String,
}

/// A finished run: its manifest and the human-readable summary lines.
#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub manifest: Manifest,
    pub summary: Vec<String>,
}

/// Runs `experiment` and writes its artifacts and manifest into `out`.
/// The gap sweep is seeded from the run's root seed.
pub fn run(experiment: Experiment, mut cfg: RunConfig, out: &Path) -> Result<RunOutcome, CliError> {
    cfg.gap.root_seed = cfg.seed;
    let started = Instant::now();
    let artifacts = experiments::run(experiment, &cfg)?;
    let outputs = artifacts.write(out)?;
    let manifest = Manifest::new(experiment, cfg, outputs, started.elapsed().as_secs_f64());
    manifest.write(out)?;
    Ok(RunOutcome { manifest, summary: artifacts.summary })
}

/// Re-runs the experiment recorded in a manifest.
pub fn replay(manifest_path: &Path, out: &Path) -> Result<RunOutcome, CliError> {
    let manifest = Manifest::load(manifest_path)?;
    run(manifest.experiment, manifest.config, out)
}

/// Output directory used when none is given.
pub fn default_out(experiment: Experiment) -> PathBuf {
    PathBuf::from("out").join(experiment.name())
}
