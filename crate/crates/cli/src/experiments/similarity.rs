//! Scale (`r`) and angle (`s`) similarity between `C`, `F` and `H`: least
//! squares at the true parameters, and along the training run of a small
//! classifier.

use infonoise::infomat::{compute_all, ols_closed_forms, similarity_r, similarity_s, FisherMode, InfoMatrixSet};
use infonoise::linalg::SymMatrix;
use infonoise::models::{train, Dataset, Family, LossOracle, Target, TrainConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::config::RunConfig;
use crate::output::{num, Artifacts};
use crate::CliError;

/// `(r, s)` for the pairs (C, H), (F, H), (C, F).
pub fn pair_similarities(m: &InfoMatrixSet<f64>) -> Result<[(f64, f64); 3], CliError> {
    let pair = |a: &SymMatrix<f64>, b: &SymMatrix<f64>| -> Result<(f64, f64), CliError> {
        Ok((similarity_r(a, b)?, similarity_s(a, b)?))
    };
    Ok([pair(&m.c, &m.h)?, pair(&m.f, &m.h)?, pair(&m.c, &m.f)?])
}

const PAIRS: [&str; 3] = ["C-H", "F-H", "C-F"];

/// Standard normal inputs and `y = W x + σ z`, with the oracle at `W`.
pub fn synthetic_ols(
    inputs: usize,
    outputs: usize,
    samples: usize,
    sigma: f64,
    weight_scale: f64,
    rng: &mut impl Rng,
) -> Result<(LossOracle<f64>, Dataset<f64>), CliError> {
    let oracle = LossOracle::random(Family::Ols { inputs, outputs }, weight_scale, rng)?;
    let w = oracle.theta().to_vec();
    let mut xs = Vec::with_capacity(samples);
    let mut ys = Vec::with_capacity(samples);
    for _ in 0..samples {
        let x: Vec<f64> = (0..inputs).map(|_| rng.sample(StandardNormal)).collect();
        let y = (0..outputs)
            .map(|j| {
                let mean: f64 = w[j * inputs..(j + 1) * inputs].iter().zip(&x).map(|(a, b)| a * b).sum();
                mean + sigma * rng.sample::<f64, _>(StandardNormal)
            })
            .collect();
        xs.push(x);
        ys.push(Target::Real(y));
    }
    Ok((oracle, Dataset::new(xs, ys)?))
}

/// One row of the least-squares table.
#[derive(Clone, Debug, PartialEq)]
pub struct OlsRow {
    pub sigma: f64,
    /// `"sampled"` (matrices from the drawn data) or `"population"`
    /// (noise expectation taken in closed form over the same inputs).
    pub source: &'static str,
    pub pairs: [(f64, f64); 3],
}

pub fn ols_rows(cfg: &RunConfig) -> Result<Vec<OlsRow>, CliError> {
    let s = &cfg.similarity;
    let mut rows = Vec::new();
    for (i, &sigma) in s.ols_sigmas.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(i as u64);
        let (oracle, data) = synthetic_ols(s.ols_inputs, s.ols_outputs, s.ols_samples, sigma, 1.0, &mut rng)?;
        let sampled = compute_all(&oracle, &data, FisherMode::Exact)?;
        rows.push(OlsRow { sigma, source: "sampled", pairs: pair_similarities(&sampled)? });
        let noise = SymMatrix::identity(s.ols_outputs).scale(sigma * sigma);
        let (h, f, c) = ols_closed_forms(data.inputs(), &noise)?;
        let population = InfoMatrixSet { s: c.clone(), h, f, c, n: data.len(), fisher_mc_draws: 0 };
        rows.push(OlsRow { sigma, source: "population", pairs: pair_similarities(&population)? });
    }
    Ok(rows)
}

/// Training step, training loss and pair similarities.
pub type Checkpoint = (usize, f64, [(f64, f64); 3]);

/// Similarities at evenly spaced points of a training run.
pub fn trajectory(cfg: &RunConfig) -> Result<Vec<Checkpoint>, CliError> {
    let s = &cfg.similarity;
    if s.checkpoints == 0 {
        return Err(CliError::Config("similarity.checkpoints must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(s.ols_sigmas.len() as u64);
    let data: Dataset<f64> = s.mixture.sample(s.samples, &mut rng)?;
    let mut model = LossOracle::random(s.model, s.init_scale, &mut rng)?;
    let mut out = Vec::with_capacity(s.checkpoints + 1);
    let mut done = 0;
    for k in 0..=s.checkpoints {
        if k > 0 {
            // segments restart the momentum buffer; the default run has none
            let target = s.train.steps * k / s.checkpoints;
            let seg = TrainConfig { steps: target - done, ..s.train.clone() };
            model = train(&model, &data, &seg, &mut rng)?;
            done = target;
        }
        let m = compute_all(&model, &data, FisherMode::Exact)?;
        out.push((done, model.mean_loss(&data)?, pair_similarities(&m)?));
    }
    Ok(out)
}

pub fn run(cfg: &RunConfig) -> Result<Artifacts, CliError> {
    let mut out = Artifacts::default();
    let ols = ols_rows(cfg)?;
    let mut header = vec!["sigma".to_string(), "source".to_string()];
    for p in PAIRS {
        header.push(format!("r_{p}"));
        header.push(format!("s_{p}"));
    }
    let rows: Vec<Vec<String>> = ols
        .iter()
        .map(|r| {
            let mut row = vec![num(r.sigma), r.source.to_string()];
            for (rv, sv) in r.pairs {
                row.push(num(rv));
                row.push(num(sv));
            }
            row
        })
        .collect();
    out.add_csv("similarity.csv", &header.iter().map(String::as_str).collect::<Vec<_>>(), &rows)?;
    for r in ols.iter().filter(|r| r.source == "population") {
        let (rv, sv) = r.pairs[0];
        out.summary.push(format!("similarity: OLS σ = {}: r(C,H) = {rv} (σ² = {}), s(C,H) = {sv}", r.sigma, r.sigma * r.sigma));
    }

    let traj = trajectory(cfg)?;
    let mut header = vec!["step".to_string(), "train_loss".to_string()];
    for p in PAIRS {
        header.push(format!("r_{p}"));
        header.push(format!("s_{p}"));
    }
    let rows: Vec<Vec<String>> = traj
        .iter()
        .map(|(step, loss, pairs)| {
            let mut row = vec![step.to_string(), num(*loss)];
            for (rv, sv) in pairs {
                row.push(num(*rv));
                row.push(num(*sv));
            }
            row
        })
        .collect();
    out.add_csv("similarity_trajectory.csv", &header.iter().map(String::as_str).collect::<Vec<_>>(), &rows)?;
    let mut series = Vec::new();
    for (k, p) in PAIRS.iter().enumerate() {
        series.push((format!("r({p}) vs step"), traj.iter().map(|(t, _, ps)| (*t as f64, ps[k].0)).collect()));
        series.push((format!("s({p}) vs step"), traj.iter().map(|(t, _, ps)| (*t as f64, ps[k].1)).collect()));
    }
    out.add_plotdata("similarity", &series);
    if let Some((step, _, pairs)) = traj.last() {
        out.summary.push(format!(
            "similarity: after {step} training steps r(C,H) = {:.4}, s(C,H) = {:.4}, s(F,H) = {:.4}",
            pairs[0].0, pairs[0].1, pairs[1].1
        ));
    }
    Ok(out)
}
