//! Stationary suboptimality: closed forms against the iterated recursion,
//! exact propagation against simulated paths, the momentum stepsize
//! relation, and limit-cycle curves over the stepsize for the benchmark.

use infonoise::linalg::SymMatrix;
use infonoise::quadsim::{
    is_stable, limit_cycle_polyak, limit_cycle_sg, limit_cycle_sweep, log_grid, make_problem, mc_sweep,
    stationary_subopt, MethodKind, Theta0Mode,
};
use serde::Serialize;

use crate::config::{LimitCycleConfig, RunConfig};
use crate::output::{num, Artifacts, Series};
use crate::CliError;

/// `limit_polyak(α(1−γ), γ) / limit_sg(α)` on the benchmark quadratic.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RatioPoint {
    pub beta: i32,
    pub alpha: f64,
    pub gamma: f64,
    pub sg: f64,
    pub polyak: f64,
    pub ratio: f64,
}

pub fn momentum_ratios(cfg: &LimitCycleConfig) -> Result<Vec<RatioPoint>, CliError> {
    let mut out = Vec::new();
    for &beta in &cfg.curve_betas {
        let (p, _) = make_problem::<f64>(cfg.curve_dim, beta, &Theta0Mode::Ones)?;
        let eye = SymMatrix::identity(p.dim());
        for &alpha in &cfg.ratio_alphas {
            let sg = limit_cycle_sg(&p, alpha, &eye)?;
            for &gamma in &cfg.ratio_gammas {
                let polyak = limit_cycle_polyak(&p, alpha * (1.0 - gamma), gamma)?;
                out.push(RatioPoint { beta, alpha, gamma, sg, polyak, ratio: polyak / sg });
            }
        }
    }
    Ok(out)
}

/// Stationary suboptimality over the stable part of a stepsize grid.
fn curves(cfg: &LimitCycleConfig) -> Result<Vec<Series>, CliError> {
    let grid = log_grid(1e-5, 2.0, 10)?;
    let mut series = Vec::new();
    for &beta in &cfg.curve_betas {
        let (p, _) = make_problem::<f64>(cfg.curve_dim, beta, &Theta0Mode::Ones)?;
        for kind in MethodKind::ALL {
            let mut points = Vec::new();
            for &alpha in &grid {
                let m = kind.build(&p, alpha, cfg.curve_gamma)?;
                if is_stable(&p, &m)? {
                    points.push((alpha, stationary_subopt(&p, &m)?));
                }
            }
            let gamma = if kind == MethodKind::Polyak { format!(" gamma={}", cfg.curve_gamma) } else { String::new() };
            series.push((format!("method={} beta={beta}{gamma}", kind.name()), points));
        }
    }
    Ok(series)
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

pub fn run(cfg: &RunConfig) -> Result<Artifacts, CliError> {
    let lc = &cfg.limit_cycles;
    let mut out = Artifacts::default();

    let checks = limit_cycle_sweep(lc.cases, cfg.seed)?;
    let rows: Vec<Vec<String>> = checks
        .iter()
        .map(|c| {
            vec![
                c.case.to_string(),
                c.dim.to_string(),
                c.method.into(),
                num(c.alpha),
                opt(c.gamma),
                num(c.closed_form),
                num(c.iterated),
                num(c.abs_diff),
                opt(c.lyapunov_residual),
                c.iterations.to_string(),
            ]
        })
        .collect();
    out.add_csv(
        "limit_cycles.csv",
        &["case", "dim", "method", "alpha", "gamma", "closed_form", "iterated", "abs_diff", "lyapunov_residual", "iterations"],
        &rows,
    )?;
    let max_diff = checks.iter().map(|c| c.abs_diff).fold(0.0, f64::max);
    let max_lyap = checks.iter().filter_map(|c| c.lyapunov_residual).fold(0.0, f64::max);
    out.summary.push(format!(
        "limit cycles: {} configurations, max |closed form − recursion| = {max_diff:e} ({}), max Lyapunov residual = {max_lyap:e}",
        checks.len(),
        if max_diff < lc.tolerance && max_lyap < lc.tolerance { "within tolerance" } else { "OUT OF TOLERANCE" }
    ));

    let mc = mc_sweep(lc.mc_cases, lc.mc_paths, lc.mc_horizon, cfg.seed)?;
    let mut rows = Vec::new();
    for c in &mc {
        for (k, (&t, &z)) in c.agreement.checkpoints.iter().zip(&c.agreement.z_scores).enumerate() {
            rows.push(vec![
                c.case.to_string(),
                c.dim.to_string(),
                c.method.into(),
                num(c.alpha),
                opt(c.gamma),
                k.to_string(),
                t.to_string(),
                num(z),
                c.bound_violations.map(|v| v.to_string()).unwrap_or_default(),
            ]);
        }
    }
    out.add_csv(
        "mc.csv",
        &["case", "dim", "method", "alpha", "gamma", "checkpoint", "step", "z_score", "bound_violations"],
        &rows,
    )?;
    let exceed: usize = mc.iter().map(|c| c.agreement.exceedances).sum();
    let max_z = mc.iter().flat_map(|c| c.agreement.z_scores.iter().copied()).fold(0.0, f64::max);
    let applicable = mc.iter().filter(|c| c.bound_violations.is_some()).count();
    let violations: usize = mc.iter().filter_map(|c| c.bound_violations).sum();
    out.summary.push(format!(
        "monte carlo: {} configurations × {} paths, {exceed} checkpoints beyond 3 stderr (max z = {max_z:.2}); \
         bound applies to {applicable}, {violations} violations",
        mc.len(),
        lc.mc_paths
    ));

    let ratios = momentum_ratios(lc)?;
    let rows: Vec<Vec<String>> = ratios
        .iter()
        .map(|r| vec![r.beta.to_string(), num(r.alpha), num(r.gamma), num(r.sg), num(r.polyak), num(r.ratio)])
        .collect();
    out.add_csv("momentum_ratio.csv", &["beta", "alpha", "gamma", "limit_sg", "limit_polyak", "ratio"], &rows)?;
    let (lo, hi) = ratios.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| (lo.min(r.ratio), hi.max(r.ratio)));
    out.summary.push(format!("momentum ratio limit_polyak(α(1−γ), γ) / limit_sg(α) in [{lo:.6}, {hi:.6}]"));

    out.add_plotdata("limit_cycle", &curves(lc)?);
    Ok(out)
}
