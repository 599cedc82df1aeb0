//! Randomized check of the χ²-divergence bounds on the distances between
//! `H`, `F` and `C`.

use infonoise::bounds::{bounds_sweep, TrialRecord};

use crate::config::RunConfig;
use crate::output::{num, Artifacts};
use crate::CliError;

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

/// Largest Frobenius distance between any two of the matrices in a trial.
pub fn max_distance(r: &TrialRecord) -> f64 {
    let rep = &r.report;
    rep.lhs_fh.max(rep.lhs_fc).max(rep.lhs_ch).max(0.0).sqrt()
}

pub fn run(cfg: &RunConfig) -> Result<Artifacts, CliError> {
    let b = &cfg.bounds;
    let records = bounds_sweep(&b.trial, b.trials, b.equal_trials, cfg.seed)?;
    let mut out = Artifacts::default();
    let rows: Vec<Vec<String>> = records
        .iter()
        .map(|r| {
            let rep = &r.report;
            vec![
                r.trial.to_string(),
                r.equal.to_string(),
                serde_json::to_value(rep.direction)
                    .ok()
                    .and_then(|v| v.as_str().map(str::to_owned))
                    .unwrap_or_default(),
                opt(rep.chi2_forward),
                opt(rep.chi2_backward),
                num(rep.beta1),
                num(rep.beta2),
                num(rep.lhs_fh),
                num(rep.slack_fh),
                num(rep.lhs_fc),
                num(rep.slack_fc),
                num(rep.lhs_ch),
                num(rep.slack_ch),
                num(rep.fisher_route_gap),
            ]
        })
        .collect();
    out.add_csv(
        "bounds.csv",
        &[
            "trial", "equal", "direction", "chi2_forward", "chi2_backward", "beta1", "beta2", "lhs_fh", "slack_fh",
            "lhs_fc", "slack_fc", "lhs_ch", "slack_ch", "fisher_route_gap",
        ],
        &rows,
    )?;

    let random: Vec<&TrialRecord> = records.iter().filter(|r| !r.equal).collect();
    let violations = random.iter().filter(|r| r.report.min_slack() < -b.slack_tolerance).count();
    let min_slack = random.iter().map(|r| r.report.min_slack()).fold(f64::INFINITY, f64::min);
    let equal_dist = records.iter().filter(|r| r.equal).map(max_distance).fold(0.0, f64::max);
    out.summary.push(format!(
        "bounds: {} evaluations, {violations} below −{:e} slack (min slack {min_slack:e}); p = q trials max distance {equal_dist:e}",
        random.len(),
        b.slack_tolerance
    ));

    let pairs = |lhs: fn(&TrialRecord) -> f64, slack: fn(&TrialRecord) -> f64| -> Vec<(f64, f64)> {
        random.iter().map(|r| (lhs(r) + slack(r), lhs(r))).collect()
    };
    out.add_plotdata(
        "bounds",
        &[
            ("F-H: bound vs distance".into(), pairs(|r| r.report.lhs_fh, |r| r.report.slack_fh)),
            ("F-C: bound vs distance".into(), pairs(|r| r.report.lhs_fc, |r| r.report.slack_fc)),
            ("C-H: bound vs distance".into(), pairs(|r| r.report.lhs_ch, |r| r.report.slack_ch)),
        ],
    );
    Ok(out)
}
