use std::fs;
use std::path::Path;
use std::process::Command;

use infonoise::models::{Family, MixtureSpec};
use infonoise_cli::config::DataSource;
use infonoise_cli::{run, Experiment, Manifest, RunConfig, EXIT_CONFIG, EXIT_NUMERICAL};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_infonoise"))
}

fn read(dir: &Path, name: &str) -> String {
    fs::read_to_string(dir.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

fn csv_rows(dir: &Path, name: &str) -> Vec<csv::StringRecord> {
    csv::Reader::from_path(dir.join(name)).unwrap().records().map(Result::unwrap).collect()
}

/// Settings small enough for a debug-profile test run.
fn quick_config() -> RunConfig {
    let mut cfg = RunConfig { seed: 3, ..RunConfig::default() };
    cfg.table.dim = 6;
    cfg.table.thresholds = vec![1.0, 0.1];
    cfg.table.alphas_per_decade = 10;
    cfg.limit_cycles.cases = 6;
    cfg.limit_cycles.mc_cases = 3;
    cfg.limit_cycles.mc_paths = 200;
    cfg.limit_cycles.mc_horizon = 10;
    cfg.limit_cycles.curve_dim = 4;
    cfg.bounds.trials = 10;
    cfg.bounds.equal_trials = 3;
    cfg.similarity.ols_samples = 300;
    cfg.similarity.samples = 30;
    cfg.similarity.train.steps = 40;
    cfg.similarity.checkpoints = 4;
    cfg.gap.n_test = 100;
    cfg.gap.corruption_levels = vec![0.0, 0.3, 0.6, 0.9];
    cfg.gap.seeds = 1;
    cfg.gap.train.steps = 60;
    cfg
}

const ALL: [Experiment; 7] = [
    Experiment::Table1,
    Experiment::Table2,
    Experiment::LimitCycles,
    Experiment::Bounds,
    Experiment::Infomat,
    Experiment::Similarity,
    Experiment::Gap,
];

#[test]
fn outputs_are_byte_identical_across_runs() {
    let cfg = quick_config();
    for exp in ALL {
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        let ra = run(exp, cfg.clone(), a.path()).unwrap();
        let rb = run(exp, cfg.clone(), b.path()).unwrap();
        assert_eq!(ra.manifest.outputs, rb.manifest.outputs);
        assert!(!ra.manifest.outputs.is_empty(), "{exp}");
        for name in &ra.manifest.outputs {
            assert_eq!(fs::read(a.path().join(name)).unwrap(), fs::read(b.path().join(name)).unwrap(), "{exp}/{name}");
        }
        assert!(ra.manifest.outputs.iter().any(|n| n.ends_with(".csv")), "{exp} writes a CSV");
    }
}

#[test]
fn seed_changes_random_outputs() {
    let mut cfg = quick_config();
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    run(Experiment::Bounds, cfg.clone(), a.path()).unwrap();
    cfg.seed += 1;
    run(Experiment::Bounds, cfg, b.path()).unwrap();
    assert_ne!(read(a.path(), "bounds.csv"), read(b.path(), "bounds.csv"));
}

#[test]
fn replay_reproduces_outputs_from_manifest_alone() {
    let first = tempfile::tempdir().unwrap();
    let second = tempfile::tempdir().unwrap();
    let cfg_path = first.path().join("cfg.toml");
    fs::write(&cfg_path, quick_config().to_toml()).unwrap();
    let status = bin()
        .args(["similarity", "--seed", "17", "--config"])
        .arg(&cfg_path)
        .arg("--out")
        .arg(first.path())
        .status()
        .unwrap();
    assert!(status.success());
    let manifest = Manifest::load(&first.path().join(Manifest::FILE)).unwrap();
    assert_eq!((manifest.root_seed, manifest.config.seed), (17, 17));
    assert_eq!(manifest.config.similarity, quick_config().similarity);

    let status = bin().arg("--replay").arg(first.path().join(Manifest::FILE)).arg("--out").arg(second.path()).status().unwrap();
    assert!(status.success());
    let replayed = Manifest::load(&second.path().join(Manifest::FILE)).unwrap();
    assert_eq!(replayed.config, manifest.config);
    for name in &manifest.outputs {
        assert_eq!(read(first.path(), name), read(second.path(), name), "{name}");
    }
}

#[test]
fn flags_override_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("cfg.toml");
    fs::write(&cfg_path, "seed = 4\n[table]\ndim = 3\nthresholds = [1.0]\nalphas_per_decade = 5\n").unwrap();
    let out = dir.path().join("out");
    let status = bin()
        .args(["table1", "--seed", "9", "--theta0-mode", "unit-subopt-uniform", "--cutoff", "0.01", "--config"])
        .arg(&cfg_path)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let m = Manifest::load(&out.join(Manifest::FILE)).unwrap();
    assert_eq!(m.config.seed, 9);
    assert_eq!(m.config.table.dim, 3);
    assert_eq!(m.config.table.theta0_mode.to_string(), "unit-subopt-uniform");
    assert_eq!(m.config.gap.rel_cutoff, 0.01);
    assert!(read(&out, "table1.md").contains("unit-subopt-uniform"));
}

#[test]
fn config_errors_exit_2_with_a_record() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("cfg.toml");
    fs::write(&cfg_path, "[table]\ndimension = 3\n").unwrap();
    let out = dir.path().join("out");
    let res = bin().arg("table1").arg("--config").arg(&cfg_path).arg("--out").arg(&out).output().unwrap();
    assert_eq!(res.status.code(), Some(EXIT_CONFIG));
    let stderr = String::from_utf8(res.stderr).unwrap();
    let record: serde_json::Value = serde_json::from_str(stderr.lines().last().unwrap()).unwrap();
    assert_eq!(record["status"], "error");
    assert_eq!(record["kind"], "config");
    assert_eq!(record["exit_code"], EXIT_CONFIG);
    let written: serde_json::Value = serde_json::from_str(&read(&out, "error.json")).unwrap();
    assert_eq!(written, record);
    assert!(!out.join(Manifest::FILE).exists());

    let res = bin().arg("no-such-experiment").output().unwrap();
    assert_eq!(res.status.code(), Some(EXIT_CONFIG));
}

#[test]
fn unstable_stepsize_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("cfg.toml");
    let mut cfg = quick_config();
    cfg.limit_cycles.ratio_alphas = vec![10.0];
    fs::write(&cfg_path, cfg.to_toml()).unwrap();
    let out = dir.path().join("out");
    let res = bin().arg("limit-cycles").arg("--config").arg(&cfg_path).arg("--out").arg(&out).output().unwrap();
    assert_eq!(res.status.code(), Some(EXIT_NUMERICAL));
    let record: serde_json::Value = serde_json::from_str(&read(&out, "error.json")).unwrap();
    assert_eq!(record["kind"], "numerical");
}

#[test]
fn noiseless_table_collapses_newton_to_one_step() {
    let mut cfg = quick_config();
    cfg.table.noise_scale = 0.0;
    cfg.table.dim = 20;
    cfg.table.thresholds = vec![1.0, 0.1, 0.01];
    cfg.table.alphas_per_decade = 60;
    let dir = tempfile::tempdir().unwrap();
    run(Experiment::Table1, cfg, dir.path()).unwrap();
    let rows = csv_rows(dir.path(), "table1.csv");
    assert_eq!(rows.len(), 27);
    for r in &rows {
        if &r[1] == "Newton" {
            assert_eq!(&r[3], "1", "{r:?}");
        }
        assert!(r[6].is_empty(), "no published comparison for a rescaled problem");
    }
    // without noise β no longer matters
    for chunk in rows.chunks(3) {
        assert!(chunk.iter().all(|r| r[3] == chunk[0][3]), "{chunk:?}");
    }
}

#[test]
fn infeasible_cells_are_marked_and_the_run_succeeds() {
    let mut cfg = quick_config();
    cfg.table.thresholds = vec![1e-9];
    cfg.table.methods = vec![infonoise::quadsim::MethodKind::Sg];
    cfg.table.alpha_min = 1.0;
    cfg.table.alpha_max = 2.0;
    let dir = tempfile::tempdir().unwrap();
    run(Experiment::Table1, cfg.clone(), dir.path()).unwrap();
    let rows = csv_rows(dir.path(), "table1.csv");
    assert!(rows.iter().all(|r| &r[3] == "diverged"), "{rows:?}");

    cfg.table.alpha_min = 1e-4;
    cfg.table.alpha_max = 1e-3;
    run(Experiment::Table1, cfg, dir.path()).unwrap();
    let rows = csv_rows(dir.path(), "table1.csv");
    assert!(rows.iter().all(|r| &r[3] == "never"), "{rows:?}");
}

#[test]
fn bounds_with_equal_joints_have_zero_slack() {
    let mut cfg = quick_config();
    cfg.bounds.trials = 0;
    cfg.bounds.equal_trials = 5;
    let dir = tempfile::tempdir().unwrap();
    run(Experiment::Bounds, cfg, dir.path()).unwrap();
    let rows = csv_rows(dir.path(), "bounds.csv");
    assert_eq!(rows.len(), 10);
    for r in &rows {
        assert_eq!(&r[1], "true");
        for col in [3, 4, 7, 8, 9, 10, 11, 12] {
            let v: f64 = r[col].parse().unwrap();
            assert!(v.abs() < 1e-12, "column {col} = {v}");
        }
    }
}

#[test]
fn similarity_reports_noise_scale_for_least_squares() {
    let dir = tempfile::tempdir().unwrap();
    run(Experiment::Similarity, quick_config(), dir.path()).unwrap();
    let rows = csv_rows(dir.path(), "similarity.csv");
    for r in rows.iter().filter(|r| &r[1] == "population") {
        let sigma: f64 = r[0].parse().unwrap();
        let (rv, sv): (f64, f64) = (r[2].parse().unwrap(), r[3].parse().unwrap());
        assert!((rv - sigma * sigma).abs() < 1e-12 && (sv - 1.0).abs() < 1e-12, "{r:?}");
    }
    for r in rows.iter().filter(|r| &r[1] == "sampled") {
        let sigma: f64 = r[0].parse().unwrap();
        let rv: f64 = r[2].parse().unwrap();
        assert!((rv / (sigma * sigma) - 1.0).abs() < 0.2, "{r:?}");
    }
    let plot = read(dir.path(), "plotdata_similarity.tsv");
    assert!(plot.starts_with("# r(C-H) vs step\n0\t"));
}

#[test]
fn infomat_reads_a_csv_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let data_path = dir.path().join("data.csv");
    let mixture = MixtureSpec { inputs: 2, classes: 3, separation: 2.0, corruption: 0.0, distribution_seed: 1 };
    let data = mixture.sample::<f64>(50, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    data.write_csv(fs::File::create(&data_path).unwrap()).unwrap();

    let mut cfg = quick_config();
    cfg.infomat.model = Family::SoftmaxLinear { inputs: 2, classes: 3 };
    cfg.infomat.data = DataSource::Csv { path: data_path };
    let out = dir.path().join("out");
    run(Experiment::Infomat, cfg.clone(), &out).unwrap();
    let set = infonoise::infomat::InfoMatrixSet::<f64>::from_json(&read(&out, "infomat.json")).unwrap();
    assert_eq!((set.n, set.dim()), (50, 9));
    // the label-free Hessian of softmax regression coincides with the Fisher
    assert!(set.h.frobenius_dist_sq(&set.f).unwrap().sqrt() < 1e-12);
    assert_eq!(csv_rows(&out, "infomat_summary.csv").len(), 6);

    cfg.infomat.model = Family::GaussianMean { dim: 2 };
    let err = run(Experiment::Infomat, cfg, &out).unwrap_err();
    assert_eq!(err.exit_code(), EXIT_CONFIG, "{err}");
}

#[test]
fn gap_artifacts_cover_every_criterion() {
    let dir = tempfile::tempdir().unwrap();
    let outcome = run(Experiment::Gap, quick_config(), dir.path()).unwrap();
    for name in ["gap.csv", "gap.md", "gap_correlations.json", "plotdata_gap_tic.tsv", "plotdata_gap_flatness.tsv"] {
        assert!(outcome.manifest.outputs.iter().any(|n| n == name), "{name}");
    }
    let rows = csv_rows(dir.path(), "gap.csv");
    assert_eq!(rows.len(), 4);
    let corr: serde_json::Value = serde_json::from_str(&read(dir.path(), "gap_correlations.json")).unwrap();
    assert_eq!(corr["runs"], 4);
    assert!(outcome.summary[0].starts_with("gap: ρ(TIC)"));
}
