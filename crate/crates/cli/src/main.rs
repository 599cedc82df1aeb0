use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::Parser;
use infonoise::quadsim::Theta0Mode;
use infonoise_cli::{default_out, replay, run, CliError, Experiment, Overrides, RunConfig, EXIT_OK};

/// Experiments on information matrices and noisy-gradient dynamics.
#[derive(Debug, Parser)]
#[command(name = "infonoise", version)]
struct Args {
    /// Experiment to run; omit when replaying a manifest.
    experiment: Option<Experiment>,
    /// TOML configuration file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (default: out/<experiment>).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Table start point: unit-subopt-uniform, ones, or explicit:a,b,...
    #[arg(long, global = true)]
    theta0_mode: Option<Theta0Mode>,
    /// Relative eigenvalue cutoff for the TIC pseudo-inverse.
    #[arg(long, global = true)]
    cutoff: Option<f64>,
    /// Re-run the experiment recorded in a manifest.json.
    #[arg(long, global = true, conflicts_with_all = ["experiment", "config", "seed", "theta0_mode", "cutoff"])]
    replay: Option<PathBuf>,
}

fn execute(args: &Args) -> Result<(), CliError> {
    let outcome = if let Some(path) = &args.replay {
        let out = args.out.clone().unwrap_or_else(|| path.parent().unwrap_or(Path::new(".")).join("replay"));
        replay(path, &out)?
    } else {
        let Some(experiment) = args.experiment else {
            return Err(CliError::Config("an experiment or --replay is required".into()));
        };
        let mut cfg = match &args.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        cfg.apply(&Overrides { seed: args.seed, theta0_mode: args.theta0_mode.clone(), cutoff: args.cutoff });
        let out = args.out.clone().unwrap_or_else(|| default_out(experiment));
        run(experiment, cfg, &out)?
    };
    for line in &outcome.summary {
        println!("{line}");
    }
    let m = &outcome.manifest;
    println!("{}: wrote {} files in {:.2}s", m.experiment, m.outputs.len() + 1, m.wall_time_seconds);
    Ok(())
}

fn report(err: &CliError, out: Option<&Path>) -> ExitCode {
    let record = serde_json::to_string(&err.record()).expect("error record serializes");
    eprintln!("{record}");
    if let Some(dir) = out {
        if std::fs::create_dir_all(dir).is_ok() {
            let _ = std::fs::write(dir.join("error.json"), format!("{record}\n"));
        }
    }
    ExitCode::from(err.exit_code() as u8)
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) if matches!(e.kind(), clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return ExitCode::from(EXIT_OK as u8);
        }
        Err(e) => {
            let _ = e.print();
            return report(&CliError::Config(e.kind().to_string()), None);
        }
    };
    match execute(&args) {
        Ok(()) => ExitCode::from(EXIT_OK as u8),
        Err(err) => {
            let out = args.out.clone().or_else(|| args.experiment.map(default_out));
            report(&err, out.as_deref())
        }
    }
}
