//! `H`, `F`, `C`, `S` for one model and dataset, with pairwise similarities
//! and spectra.

use std::fs::File;

use infonoise::infomat::{compute_all, similarity_r, similarity_s};
use infonoise::models::{Dataset, Family, LossOracle, MixtureSpec, Target, TargetKind};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::similarity::synthetic_ols;
use crate::config::{DataSource, RunConfig};
use crate::output::{num, Artifacts};
use crate::CliError;

fn dataset(cfg: &RunConfig, rng: &mut ChaCha8Rng) -> Result<(LossOracle<f64>, Dataset<f64>), CliError> {
    let c = &cfg.infomat;
    let family = c.model;
    match &c.data {
        DataSource::Synthetic { samples, noise_std, separation } => match family {
            Family::Ols { inputs, outputs } => synthetic_ols(inputs, outputs, *samples, *noise_std, c.param_scale, rng),
            Family::GaussianMean { dim } => {
                let xs = (0..*samples)
                    .map(|_| (0..dim).map(|_| noise_std * rng.sample::<f64, _>(StandardNormal)).collect())
                    .collect();
                Ok((LossOracle::random(family, c.param_scale, rng)?, Dataset::unlabeled(xs)?))
            }
            Family::SoftmaxLinear { inputs, classes } | Family::SoftmaxMlp1 { inputs, classes, .. } => {
                let mixture = MixtureSpec {
                    inputs,
                    classes,
                    separation: *separation,
                    corruption: 0.0,
                    distribution_seed: cfg.seed,
                };
                let data = mixture.sample(*samples, rng)?;
                Ok((LossOracle::random(family, c.param_scale, rng)?, data))
            }
        },
        DataSource::Csv { path } => {
            let kind = match family {
                Family::GaussianMean { .. } => TargetKind::Unlabeled,
                Family::Ols { .. } => TargetKind::Real,
                _ => TargetKind::Class,
            };
            let file = File::open(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            let data = Dataset::read_csv(file, kind)?;
            data.check_compatible(family)?;
            Ok((LossOracle::random(family, c.param_scale, rng)?, data))
        }
    }
}

pub fn run(cfg: &RunConfig) -> Result<Artifacts, CliError> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (oracle, data) = dataset(cfg, &mut rng)?;
    let m = compute_all(&oracle, &data, cfg.infomat.fisher)?;
    let mut out = Artifacts::default();
    out.add("infomat.json", m.to_json() + "\n");

    let named = [("H", &m.h), ("F", &m.f), ("C", &m.c), ("S", &m.s)];
    let mut rows = Vec::new();
    for (i, (na, a)) in named.iter().enumerate() {
        for (nb, b) in &named[i + 1..] {
            let r = similarity_r(*a, *b).map(num).unwrap_or_default();
            let s = similarity_s(*a, *b).map(num).unwrap_or_default();
            rows.push(vec![na.to_string(), nb.to_string(), r, s, num(a.frobenius_dist_sq(b)?.sqrt())]);
        }
    }
    out.add_csv("infomat_summary.csv", &["a", "b", "r", "s", "frobenius_distance"], &rows)?;

    let mut series = Vec::new();
    for (name, mat) in named {
        let values = mat.eigh()?.values;
        series.push((format!("{name} eigenvalues"), values.into_iter().enumerate().map(|(k, v)| (k as f64, v)).collect()));
    }
    out.add_plotdata("spectrum", &series);
    let targets = match data.targets().first() {
        Some(Target::Class(_)) => "class labels",
        Some(Target::Real(_)) => "real targets",
        _ => "no targets",
    };
    out.summary.push(format!(
        "infomat: {:?}, {} samples ({targets}), {} parameters, Tr H = {:.6}, Tr F = {:.6}, Tr C = {:.6}",
        cfg.infomat.model,
        m.n,
        m.dim(),
        m.h.trace(),
        m.f.trace(),
        m.c.trace()
    ));
    Ok(out)
}
