use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::{Experiment, RunConfig};
use crate::CliError;

/// One labelled plot series of `(x, y)` points.
pub type Series = (String, Vec<(f64, f64)>);

/// Named output files, kept in memory until the run has succeeded.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Artifacts {
    files: Vec<(String, Vec<u8>)>,
    /// One-line human summary printed after the run.
    pub summary: Vec<String>,
}

impl Artifacts {
    pub fn add(&mut self, name: impl Into<String>, contents: impl Into<Vec<u8>>) {
        self.files.push((name.into(), contents.into()));
    }

    pub fn add_json(&mut self, name: &str, value: &impl Serialize) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.add(name, text);
        Ok(())
    }

    /// CSV from a header and rows of already-formatted fields.
    pub fn add_csv(&mut self, name: &str, header: &[&str], rows: &[Vec<String>]) -> Result<(), CliError> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        w.write_record(header)?;
        for row in rows {
            w.write_record(row)?;
        }
        let bytes = w.into_inner().map_err(|e| CliError::Output(e.to_string()))?;
        self.add(name, bytes);
        Ok(())
    }

    /// Tab-separated `x y` pairs, one block per series separated by blank
    /// lines and introduced by a `# name` comment.
    pub fn add_plotdata(&mut self, name: &str, series: &[Series]) {
        let mut text = String::new();
        for (i, (label, points)) in series.iter().enumerate() {
            if i > 0 {
                text.push_str("\n\n");
            }
            text.push_str(&format!("# {label}\n"));
            for (x, y) in points {
                text.push_str(&format!("{x}\t{y}\n"));
            }
        }
        self.add(format!("plotdata_{name}.tsv"), text);
    }

    pub fn get(&self, name: &str) -> Option<&[u8]> {
        self.files.iter().find(|(n, _)| n == name).map(|(_, b)| b.as_slice())
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.files.iter().map(|(n, _)| n.as_str())
    }

    pub fn write(&self, dir: &Path) -> Result<Vec<String>, CliError> {
        fs::create_dir_all(dir)?;
        for (name, bytes) in &self.files {
            fs::write(dir.join(name), bytes)?;
        }
        Ok(self.files.iter().map(|(n, _)| n.clone()).collect())
    }
}

/// Formats a float for tables: shortest round-trip form, `NaN` as empty.
pub fn num(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        v.to_string()
    }
}

/// Everything needed to reproduce a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub experiment: Experiment,
    pub root_seed: u64,
    pub code_version: String,
    pub config: RunConfig,
    pub outputs: Vec<String>,
    pub wall_time_seconds: f64,
}

impl Manifest {
    pub const FILE: &'static str = "manifest.json";

    pub fn new(experiment: Experiment, config: RunConfig, outputs: Vec<String>, wall_time_seconds: f64) -> Self {
        Self {
            experiment,
            root_seed: config.seed,
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            config,
            outputs,
            wall_time_seconds,
        }
    }

    pub fn write(&self, dir: &Path) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(dir.join(Self::FILE), text)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }
}
