//! Run configuration: one TOML file with a section per experiment. Every key
//! has a default, flags override the file, and the effective values are
//! written back into each run's manifest.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::ValueEnum;
use infonoise::bounds::TrialSpec;
use infonoise::criteria::GapConfig;
use infonoise::infomat::FisherMode;
use infonoise::models::{Family, MixtureSpec, TrainConfig};
use infonoise::quadsim::{log_grid, MethodKind, Theta0Mode};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
#[value(rename_all = "kebab-case")]
pub enum Experiment {
    Table1,
    Table2,
    LimitCycles,
    Bounds,
    Infomat,
    Similarity,
    Gap,
}

impl Experiment {
    pub fn name(&self) -> &'static str {
        match self {
            Experiment::Table1 => "table1",
            Experiment::Table2 => "table2",
            Experiment::LimitCycles => "limit-cycles",
            Experiment::Bounds => "bounds",
            Experiment::Infomat => "infomat",
            Experiment::Similarity => "similarity",
            Experiment::Gap => "gap",
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Experiment {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        <Experiment as ValueEnum>::from_str(s, false).map_err(|_| CliError::Config(format!("unknown experiment {s:?}")))
    }
}

/// Effective configuration of one run.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub table: TableConfig,
    pub limit_cycles: LimitCycleConfig,
    pub bounds: BoundsConfig,
    pub infomat: InfomatConfig,
    pub similarity: SimilarityConfig,
    pub gap: GapConfig,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    /// Applies command-line overrides. `cutoff` sets the TIC cutoff.
    pub fn apply(&mut self, o: &Overrides) {
        if let Some(seed) = o.seed {
            self.seed = seed;
        }
        if let Some(mode) = &o.theta0_mode {
            self.table.theta0_mode = mode.clone();
        }
        if let Some(c) = o.cutoff {
            self.gap.rel_cutoff = c;
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub theta0_mode: Option<Theta0Mode>,
    pub cutoff: Option<f64>,
}

/// Benchmark quadratic: `H = diag(i²)`, `S ∝ H^β` with `Tr(S) = d`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TableConfig {
    pub dim: usize,
    pub betas: Vec<i32>,
    pub thresholds: Vec<f64>,
    pub methods: Vec<MethodKind>,
    pub theta0_mode: Theta0Mode,
    /// Multiplies `S`; zero gives the noiseless problem.
    pub noise_scale: f64,
    pub alpha_min: f64,
    pub alpha_max: f64,
    pub alphas_per_decade: usize,
    /// Momentum values searched jointly with the stepsize.
    pub polyak_gammas: Vec<f64>,
}

impl Default for TableConfig {
    fn default() -> Self {
        Self {
            dim: 20,
            betas: vec![1, 0, -1],
            thresholds: vec![1.0, 0.1, 0.01],
            methods: MethodKind::ALL.to_vec(),
            theta0_mode: Theta0Mode::Ones,
            noise_scale: 1.0,
            alpha_min: 1e-5,
            alpha_max: 2.0,
            alphas_per_decade: 60,
            polyak_gammas: vec![0.8],
        }
    }
}

impl TableConfig {
    pub fn alpha_grid(&self) -> Result<Vec<f64>, CliError> {
        Ok(log_grid(self.alpha_min, self.alpha_max, self.alphas_per_decade)?)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LimitCycleConfig {
    /// Random commuting configurations checked against the recursion.
    pub cases: usize,
    pub tolerance: f64,
    /// Random configurations simulated path by path.
    pub mc_cases: usize,
    pub mc_paths: usize,
    pub mc_horizon: usize,
    /// Stepsizes for the momentum/SG ratio `limit(α(1−γ), γ) / limit(α)`.
    pub ratio_alphas: Vec<f64>,
    pub ratio_gammas: Vec<f64>,
    /// Limit-cycle curves over the stepsize grid of the benchmark quadratic.
    pub curve_dim: usize,
    pub curve_betas: Vec<i32>,
    pub curve_gamma: f64,
}

impl Default for LimitCycleConfig {
    fn default() -> Self {
        Self {
            cases: 50,
            tolerance: 1e-8,
            mc_cases: 50,
            mc_paths: 10_000,
            mc_horizon: 40,
            ratio_alphas: vec![1e-5, 1e-6],
            ratio_gammas: vec![0.5, 0.9, 0.99],
            curve_dim: 20,
            curve_betas: vec![1, 0, -1],
            curve_gamma: 0.9,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundsConfig {
    pub trials: usize,
    pub equal_trials: usize,
    /// Reported violations are slacks below `-slack_tolerance`.
    pub slack_tolerance: f64,
    pub trial: TrialSpec,
}

impl Default for BoundsConfig {
    fn default() -> Self {
        Self { trials: 200, equal_trials: 20, slack_tolerance: 1e-9, trial: TrialSpec::default() }
    }
}

/// Where the data for `infomat` comes from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    /// Draws matching the family: a Gaussian mixture for classifiers,
    /// `y = W*x + σ z` for least squares, standard normals otherwise.
    Synthetic { samples: usize, noise_std: f64, separation: f64 },
    /// A CSV file in the `x_i`, `y`/`y_j` column layout.
    Csv { path: PathBuf },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InfomatConfig {
    pub model: Family,
    pub data: DataSource,
    pub param_scale: f64,
    pub fisher: FisherMode,
}

impl Default for InfomatConfig {
    fn default() -> Self {
        Self {
            model: Family::SoftmaxMlp1 { inputs: 2, hidden: 4, classes: 3 },
            data: DataSource::Synthetic { samples: 200, noise_std: 1.0, separation: 2.0 },
            param_scale: 0.5,
            fisher: FisherMode::Exact,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimilarityConfig {
    /// Least squares at the true parameters with isotropic noise `σ²I`.
    pub ols_inputs: usize,
    pub ols_outputs: usize,
    pub ols_samples: usize,
    pub ols_sigmas: Vec<f64>,
    /// Similarities along a training run of a small classifier.
    pub mixture: MixtureSpec,
    pub model: Family,
    pub samples: usize,
    pub init_scale: f64,
    pub train: TrainConfig,
    pub checkpoints: usize,
}

impl Default for SimilarityConfig {
    fn default() -> Self {
        Self {
            ols_inputs: 3,
            ols_outputs: 2,
            ols_samples: 20_000,
            ols_sigmas: vec![0.5, 1.0, 2.0],
            mixture: MixtureSpec { inputs: 2, classes: 3, separation: 2.0, corruption: 0.1, distribution_seed: 11 },
            model: Family::SoftmaxMlp1 { inputs: 2, hidden: 6, classes: 3 },
            samples: 100,
            init_scale: 0.5,
            train: TrainConfig { steps: 2000, stepsize: 0.2, batch: 1_000_000, momentum: 0.0 },
            checkpoints: 20,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let cfg = RunConfig::default();
        assert_eq!(RunConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
    }

    #[test]
    fn partial_file_keeps_other_defaults() {
        let cfg = RunConfig::from_toml("seed = 5\n[table]\ntheta0_mode = \"unit-subopt-uniform\"\nbetas = [0]\n").unwrap();
        assert_eq!(cfg.seed, 5);
        assert_eq!(cfg.table.theta0_mode, Theta0Mode::UnitSuboptUniform);
        assert_eq!(cfg.table.betas, vec![0]);
        assert_eq!(cfg.table.dim, 20);
        assert_eq!(cfg.gap, GapConfig::default());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(matches!(RunConfig::from_toml("sead = 1"), Err(CliError::Config(_))));
        assert!(matches!(RunConfig::from_toml("[table]\ndimension = 3"), Err(CliError::Config(_))));
    }

    #[test]
    fn explicit_theta0_in_toml() {
        let cfg = RunConfig::from_toml("[table]\ndim = 2\ntheta0_mode = { explicit = [1.0, 2.0] }\n").unwrap();
        assert_eq!(cfg.table.theta0_mode, Theta0Mode::Explicit(vec![1.0, 2.0]));
    }

    #[test]
    fn overrides_win() {
        let mut cfg = RunConfig::default();
        cfg.apply(&Overrides { seed: Some(9), theta0_mode: Some(Theta0Mode::UnitSuboptUniform), cutoff: Some(1e-2) });
        assert_eq!((cfg.seed, cfg.gap.rel_cutoff), (9, 1e-2));
        assert_eq!(cfg.table.theta0_mode, Theta0Mode::UnitSuboptUniform);
    }
}
