//! Step counts (`table1`) and best stepsizes (`table2`) on the benchmark
//! quadratic, for every (threshold, method, β) cell.

use std::fmt::Write as _;

use infonoise::quadsim::{
    make_problem_scaled, optimize_stepsize, steps_to_threshold, GridPoint, MethodKind, StepOutcome,
};
use infonoise::Error;
use serde::Serialize;

use crate::config::{RunConfig, TableConfig};
use crate::output::{num, Artifacts, Series};
use crate::reference;
use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "outcome", content = "steps", rename_all = "snake_case")]
pub enum CellResult {
    Steps(usize),
    /// Every stepsize on the grid leaves the stationary suboptimality above the threshold.
    Never,
    /// Every stepsize on the grid is unstable.
    Diverged,
}

impl CellResult {
    pub fn steps(&self) -> Option<usize> {
        match self {
            CellResult::Steps(n) => Some(*n),
            _ => None,
        }
    }

    fn label(&self) -> String {
        match self {
            CellResult::Steps(n) => n.to_string(),
            CellResult::Never => "never".into(),
            CellResult::Diverged => "diverged".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Cell {
    pub eps: f64,
    pub method: MethodKind,
    pub beta: i32,
    pub result: CellResult,
    pub alpha: Option<f64>,
    pub gamma: Option<f64>,
    #[serde(skip)]
    pub profile: Vec<GridPoint>,
}

/// Optimizes the stepsize (and momentum, for Polyak) in every cell.
pub fn compute(cfg: &TableConfig) -> Result<Vec<Cell>, CliError> {
    if cfg.thresholds.iter().any(|&e| !(e > 0.0)) {
        return Err(CliError::Config("thresholds must be positive".into()));
    }
    let grid = cfg.alpha_grid()?;
    let problems = cfg
        .betas
        .iter()
        .map(|&beta| make_problem_scaled::<f64>(cfg.dim, beta, cfg.noise_scale, &cfg.theta0_mode))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| match e {
            Error::InvalidArgument(m) | Error::DimensionMismatch(m) => CliError::Config(m),
            other => other.into(),
        })?;
    let mut cells = Vec::new();
    for &eps in &cfg.thresholds {
        for &method in &cfg.methods {
            for (&beta, (problem, theta0)) in cfg.betas.iter().zip(&problems) {
                let cell = match optimize_stepsize(problem, method, theta0, eps, &grid, &cfg.polyak_gammas) {
                    Ok(choice) => Cell {
                        eps,
                        method,
                        beta,
                        result: CellResult::Steps(choice.best_steps),
                        alpha: Some(choice.best_alpha),
                        gamma: choice.best_gamma,
                        profile: choice.profile,
                    },
                    Err(Error::NoFeasibleStepsize) => {
                        // the smallest stepsize is the most stable one
                        let gamma = cfg.polyak_gammas.first().copied().unwrap_or(0.0);
                        let spec = method.build(problem, grid[0], gamma)?;
                        let result = match steps_to_threshold(problem, &spec, theta0, eps)? {
                            StepOutcome::Diverged => CellResult::Diverged,
                            _ => CellResult::Never,
                        };
                        Cell { eps, method, beta, result, alpha: None, gamma: None, profile: Vec::new() }
                    }
                    Err(e) => return Err(e.into()),
                };
                cells.push(cell);
            }
        }
    }
    Ok(cells)
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

fn profile_plot(cells: &[Cell]) -> Vec<Series> {
    cells
        .iter()
        .map(|c| {
            let points = c
                .profile
                .iter()
                .filter_map(|g| g.outcome.steps().map(|s| (g.alpha, s as f64)))
                .rev()
                .collect();
            let gamma = c.gamma.map(|g| format!(" gamma={g}")).unwrap_or_default();
            (format!("eps={} method={} beta={}{gamma}", c.eps, c.method.name(), c.beta), points)
        })
        .collect()
}

fn blocks(cfg: &TableConfig, cells: &[Cell], mut fmt_cell: impl FnMut(&Cell) -> String, title: &str) -> String {
    let mut md = format!("# {title}\n\n");
    let _ = writeln!(
        md,
        "d = {}, θ0 mode `{}`, noise scale {}, stepsizes {}–{} ({} per decade), Polyak γ ∈ {:?}.\n",
        cfg.dim, cfg.theta0_mode, cfg.noise_scale, cfg.alpha_min, cfg.alpha_max, cfg.alphas_per_decade, cfg.polyak_gammas
    );
    md.push_str("| ε | method |");
    for b in &cfg.betas {
        let _ = write!(md, " β={b} |");
    }
    md.push_str("\n|---|---|");
    for _ in &cfg.betas {
        md.push_str("---|");
    }
    md.push('\n');
    for &eps in &cfg.thresholds {
        for &method in &cfg.methods {
            let _ = write!(md, "| {eps} | {} |", method.name());
            for &beta in &cfg.betas {
                let cell = cells.iter().find(|c| c.eps == eps && c.method == method && c.beta == beta).expect("cell computed");
                let _ = write!(md, " {} |", fmt_cell(cell));
            }
            md.push('\n');
        }
    }
    md
}

/// Published count for a cell, when the cell is one of the benchmark's.
fn reference_steps(cfg: &TableConfig, c: &Cell) -> Option<usize> {
    (cfg.dim == 20 && cfg.noise_scale == 1.0).then(|| reference::steps(c.eps, c.method, c.beta)).flatten()
}

fn reference_stepsize(cfg: &TableConfig, c: &Cell) -> Option<(u8, i32)> {
    (cfg.dim == 20 && cfg.noise_scale == 1.0).then(|| reference::stepsize(c.eps, c.method, c.beta)).flatten()
}

pub fn run_table1(cfg: &RunConfig) -> Result<Artifacts, CliError> {
    let t = &cfg.table;
    let cells = compute(t)?;
    let mut out = Artifacts::default();
    let rows: Vec<Vec<String>> = cells
        .iter()
        .map(|c| {
            let reference = reference_steps(t, c);
            let rel = match (c.result.steps(), reference) {
                (Some(s), Some(r)) => num((s as f64 - r as f64) / r as f64),
                _ => String::new(),
            };
            vec![
                c.eps.to_string(),
                c.method.name().into(),
                c.beta.to_string(),
                c.result.label(),
                opt(c.alpha),
                opt(c.gamma),
                reference.map(|r| r.to_string()).unwrap_or_default(),
                rel,
            ]
        })
        .collect();
    out.add_csv(
        "table1.csv",
        &["eps", "method", "beta", "steps", "best_alpha", "best_gamma", "reference_steps", "rel_diff"],
        &rows,
    )?;
    let md = blocks(
        t,
        &cells,
        |c| match reference_steps(t, c) {
            Some(r) => format!("{} ({r})", c.result.label()),
            None => c.result.label(),
        },
        "Updates needed to reach E[Δ] ≤ ε",
    );
    out.add("table1.md", md + "\nPublished counts in parentheses where available.\n");
    out.add_plotdata("table1_profile", &profile_plot(&cells));
    out.add_json("table1.json", &cells)?;
    let reached = cells.iter().filter(|c| c.result.steps().is_some()).count();
    out.summary.push(format!("table1: {reached}/{} cells reach their threshold", cells.len()));
    Ok(out)
}

pub fn run_table2(cfg: &RunConfig) -> Result<Artifacts, CliError> {
    let t = &cfg.table;
    let cells = compute(t)?;
    let mut out = Artifacts::default();
    let mut agree = 0;
    let mut compared = 0;
    let rows: Vec<Vec<String>> = cells
        .iter()
        .map(|c| {
            let rounded = c.alpha.map(reference::one_significant);
            let reference = reference_stepsize(t, c);
            let matches = match (rounded, reference) {
                (Some(a), Some(b)) => {
                    compared += 1;
                    agree += usize::from(a == b);
                    (a == b).to_string()
                }
                _ => String::new(),
            };
            vec![
                c.eps.to_string(),
                c.method.name().into(),
                c.beta.to_string(),
                opt(c.alpha),
                rounded.map(reference::format_one_significant).unwrap_or_default(),
                reference.map(reference::format_one_significant).unwrap_or_default(),
                matches,
                opt(c.gamma),
                c.result.label(),
            ]
        })
        .collect();
    out.add_csv(
        "table2.csv",
        &["eps", "method", "beta", "best_alpha", "rounded", "reference", "agrees", "best_gamma", "steps"],
        &rows,
    )?;
    let md = blocks(
        t,
        &cells,
        |c| {
            let ours = c.alpha.map(|a| reference::format_one_significant(reference::one_significant(a)));
            match (ours, reference_stepsize(t, c)) {
                (Some(a), Some(r)) => {
                    let r = reference::format_one_significant(r);
                    let mark = if a == r { "" } else { " ≠" };
                    format!("{a} ({r}){mark}")
                }
                (Some(a), None) => a,
                (None, _) => c.result.label(),
            }
        },
        "Stepsizes reaching E[Δ] ≤ ε in the fewest updates",
    );
    out.add(
        "table2.md",
        md + &format!("\nPublished stepsizes in parentheses; {agree}/{compared} agree to one significant digit.\n"),
    );
    out.add_json("table2.json", &cells)?;
    out.summary.push(format!("table2: {agree}/{compared} stepsizes agree with the published ones to one significant digit"));
    Ok(out)
}
