//! Generalization-gap estimators: TIC and its inversion-free approximations,
//! AIC, Hessian flatness and input sensitivity, plus a synthetic
//! label-corruption sweep that compares them against measured gaps.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::infomat::{compute_all, FisherMode};
use crate::linalg::{dot, retained_indices, SymMatrix, DEFAULT_REL_CUTOFF};
use crate::models::{train, Dataset, Family, LossOracle, MixtureSpec, TrainConfig};
use crate::scalar::Scalar;

fn check_n(n: usize) -> Result<()> {
    if n == 0 {
        Err(Error::invalid("sample count must be at least 1"))
    } else {
        Ok(())
    }
}

/// `(1/N) Σ_k v_kᵀ B v_k / λ_k` over eigenpairs `(λ_k, v_k)` of `a` that
/// survive the relative cutoff, i.e. `(1/N) Tr(a⁺ b)` on the retained subspace.
fn truncated_trace<T: Scalar>(a: &SymMatrix<T>, b: &SymMatrix<T>, n: usize, rel_cutoff: T) -> Result<(T, usize)> {
    if a.dim() != b.dim() {
        return Err(Error::dims(format!("{} vs {}", a.dim(), b.dim())));
    }
    check_n(n)?;
    let eig = a.eigh()?;
    let keep = retained_indices(&eig, rel_cutoff)?;
    let mut total = T::zero();
    for &k in &keep {
        total += b.quadform(&eig.vector(k))? / eig.values[k];
    }
    Ok((total / T::from_usize(n).unwrap(), keep.len()))
}

/// Takeuchi information criterion `(1/N) Tr(H⁻¹ C)`, with `H` inverted on
/// the eigenspace where `λ ≥ rel_cutoff · λ_max`. Returns the retained rank.
pub fn tic<T: Scalar>(h: &SymMatrix<T>, c: &SymMatrix<T>, n: usize, rel_cutoff: T) -> Result<(T, usize)> {
    truncated_trace(h, c, n, rel_cutoff)
}

/// `(1/N) Tr(F⁻¹ C)` with the same truncation as [`tic`].
pub fn tic_fisher<T: Scalar>(f: &SymMatrix<T>, c: &SymMatrix<T>, n: usize, rel_cutoff: T) -> Result<(T, usize)> {
    truncated_trace(f, c, n, rel_cutoff)
}

/// `Tr(C) / Tr(F)`.
pub fn trace_ratio_raw<T: Scalar>(c: &SymMatrix<T>, f: &SymMatrix<T>) -> Result<T> {
    if c.dim() != f.dim() {
        return Err(Error::dims(format!("{} vs {}", c.dim(), f.dim())));
    }
    let tf = f.trace();
    if tf == T::zero() {
        return Err(Error::DivisionByZero("Tr(F) is zero".into()));
    }
    Ok(c.trace() / tf)
}

/// `d · Tr(C) / Tr(F) / N`: equals `dα/N` when `C = αF`.
pub fn trace_ratio_criterion<T: Scalar>(c: &SymMatrix<T>, f: &SymMatrix<T>, n: usize) -> Result<T> {
    check_n(n)?;
    Ok(trace_ratio_raw(c, f)? * T::from_usize(c.dim()).unwrap() / T::from_usize(n).unwrap())
}

/// `d / N`.
pub fn aic(d: usize, n: usize) -> Result<f64> {
    check_n(n)?;
    Ok(d as f64 / n as f64)
}

/// `Tr(H)`.
pub fn flatness<T: Scalar>(h: &SymMatrix<T>) -> T {
    h.trace()
}

/// Mean squared norm of the loss gradient with respect to the input.
pub fn sensitivity<T: Scalar>(oracle: &LossOracle<T>, data: &Dataset<T>) -> Result<T> {
    if data.is_empty() {
        return Err(Error::invalid("sensitivity needs at least one sample"));
    }
    data.check_compatible(oracle.family())?;
    let mut total = T::zero();
    for (x, y) in data.iter() {
        let g = oracle.first_order(x, y)?.input_grad;
        total += dot(&g, &g);
    }
    Ok(total / T::from_usize(data.len()).unwrap())
}

/// Ranks starting at 1, ties sharing their average rank.
fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::dims(format!("{} vs {}", xs.len(), ys.len())));
    }
    if xs.len() < 3 {
        return Err(Error::invalid("rank correlation needs at least three pairs"));
    }
    if xs.iter().chain(ys).any(|v| v.is_nan()) {
        return Err(Error::invalid("rank correlation input contains NaN"));
    }
    let center = |v: Vec<f64>| {
        let m = v.iter().sum::<f64>() / v.len() as f64;
        v.into_iter().map(|a| a - m).collect::<Vec<_>>()
    };
    let rx = center(average_ranks(xs));
    let ry = center(average_ranks(ys));
    let (sxx, syy) = (dot(&rx, &rx), dot(&ry, &ry));
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::UndefinedCorrelation("constant sequence".into()));
    }
    Ok((dot(&rx, &ry) / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Which split the criteria matrices are computed on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalSplit {
    #[default]
    Test,
    Train,
}

/// Label-corruption sweep on a Gaussian mixture.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GapConfig {
    /// Mixture shape; its `corruption` field is replaced by each sweep level.
    pub mixture: MixtureSpec,
    pub family: Family,
    pub n_train: usize,
    pub n_test: usize,
    pub corruption_levels: Vec<f64>,
    pub seeds: usize,
    pub root_seed: u64,
    pub init_scale: f64,
    pub train: TrainConfig,
    pub rel_cutoff: f64,
    /// Further cutoffs at which TIC is also reported.
    pub extra_cutoffs: Vec<f64>,
    pub eval_split: EvalSplit,
    pub fisher: FisherMode,
    /// Evaluate the test loss on the training set itself.
    pub test_equals_train: bool,
}

impl Default for GapConfig {
    fn default() -> Self {
        Self {
            mixture: MixtureSpec { inputs: 2, classes: 3, separation: 3.0, corruption: 0.0, distribution_seed: 7 },
            family: Family::SoftmaxMlp1 { inputs: 2, hidden: 12, classes: 3 },
            n_train: 40,
            n_test: 2000,
            corruption_levels: (0..=10).map(|k| k as f64 / 10.0).collect(),
            seeds: 3,
            root_seed: 0,
            init_scale: 0.5,
            train: TrainConfig { steps: 3000, stepsize: 0.1, batch: 1_000_000, momentum: 0.9 },
            rel_cutoff: DEFAULT_REL_CUTOFF,
            extra_cutoffs: vec![1e-2, 1e-4],
            eval_split: EvalSplit::Test,
            fisher: FisherMode::Exact,
            test_equals_train: false,
        }
    }
}

/// Criteria and measured gap for one trained configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    pub corruption: f64,
    pub seed_index: usize,
    pub train_loss: f64,
    pub test_loss: f64,
    pub gap: f64,
    pub tic: f64,
    pub tic_fisher: f64,
    pub trace_ratio: f64,
    pub trace_ratio_raw: f64,
    pub aic: f64,
    pub flatness: f64,
    pub sensitivity: f64,
    pub retained_rank: usize,
    pub rel_cutoff: f64,
    /// TIC at each of the configured extra cutoffs.
    pub tic_extra: Vec<CutoffTic>,
    /// Sample count in the `1/N` factors (the training-set size).
    pub n: usize,
    /// Set when training or evaluation failed; numeric fields are then NaN.
    pub failure: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CutoffTic {
    pub rel_cutoff: f64,
    pub tic: f64,
    pub retained_rank: usize,
}

impl GapReport {
    fn failed(corruption: f64, seed_index: usize, cfg: &GapConfig, err: &Error) -> Self {
        Self {
            corruption,
            seed_index,
            train_loss: f64::NAN,
            test_loss: f64::NAN,
            gap: f64::NAN,
            tic: f64::NAN,
            tic_fisher: f64::NAN,
            trace_ratio: f64::NAN,
            trace_ratio_raw: f64::NAN,
            aic: f64::NAN,
            flatness: f64::NAN,
            sensitivity: f64::NAN,
            retained_rank: 0,
            rel_cutoff: cfg.rel_cutoff,
            tic_extra: Vec::new(),
            n: cfg.n_train,
            failure: Some(err.to_string()),
        }
    }
}

fn run_one(cfg: &GapConfig, corruption: f64, seed_index: usize, stream: u64) -> Result<GapReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.root_seed);
    rng.set_stream(stream);
    let mixture = MixtureSpec { corruption, ..cfg.mixture.clone() };
    let train_set: Dataset<f64> = mixture.sample(cfg.n_train, &mut rng)?;
    let test_set: Dataset<f64> = if cfg.test_equals_train { train_set.clone() } else { mixture.sample(cfg.n_test, &mut rng)? };
    let init = LossOracle::random(cfg.family, cfg.init_scale, &mut rng)?;
    let model = train(&init, &train_set, &cfg.train, &mut rng)?;

    let train_loss = model.mean_loss(&train_set)?;
    let test_loss = model.mean_loss(&test_set)?;
    let eval = match cfg.eval_split {
        EvalSplit::Test => &test_set,
        EvalSplit::Train => &train_set,
    };
    let m = compute_all(&model, eval, cfg.fisher)?;
    let (tic_v, rank) = tic(&m.h, &m.c, cfg.n_train, cfg.rel_cutoff)?;
    let (tic_f, _) = tic_fisher(&m.f, &m.c, cfg.n_train, cfg.rel_cutoff)?;
    let tic_extra = cfg
        .extra_cutoffs
        .iter()
        .map(|&c| tic(&m.h, &m.c, cfg.n_train, c).map(|(tic, retained_rank)| CutoffTic { rel_cutoff: c, tic, retained_rank }))
        .collect::<Result<Vec<_>>>()?;
    Ok(GapReport {
        corruption,
        seed_index,
        train_loss,
        test_loss,
        gap: test_loss - train_loss,
        tic: tic_v,
        tic_fisher: tic_f,
        trace_ratio: trace_ratio_criterion(&m.c, &m.f, cfg.n_train)?,
        trace_ratio_raw: trace_ratio_raw(&m.c, &m.f)?,
        aic: aic(model.param_dim(), cfg.n_train)?,
        flatness: flatness(&m.h),
        sensitivity: sensitivity(&model, eval)?,
        retained_rank: rank,
        rel_cutoff: cfg.rel_cutoff,
        tic_extra,
        n: cfg.n_train,
        failure: None,
    })
}

/// Trains one model per (corruption level, seed) and evaluates every
/// criterion. Configuration `i` draws from stream `i` of a generator seeded
/// with `root_seed`. Per-configuration failures are recorded, not raised.
pub fn gap_experiment(cfg: &GapConfig) -> Result<Vec<GapReport>> {
    if cfg.family.input_dim() != cfg.mixture.inputs || cfg.family.classes() != Some(cfg.mixture.classes) {
        return Err(Error::invalid("model family does not match the mixture"));
    }
    if cfg.n_train == 0 || cfg.n_test == 0 || cfg.seeds == 0 || cfg.corruption_levels.is_empty() {
        return Err(Error::invalid("sweep needs samples, seeds and corruption levels"));
    }
    let jobs: Vec<(f64, usize)> =
        cfg.corruption_levels.iter().flat_map(|&c| (0..cfg.seeds).map(move |s| (c, s))).collect();
    jobs.par_iter()
        .enumerate()
        .map(|(i, &(c, s))| match run_one(cfg, c, s, i as u64) {
            Ok(r) => Ok(r),
            Err(e) if e.is_numerical() => Ok(GapReport::failed(c, s, cfg, &e)),
            Err(e) => Err(e),
        })
        .collect()
}

/// Spearman correlation of each criterion with the gap over successful runs.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GapCorrelations {
    pub tic: f64,
    pub tic_fisher: f64,
    pub trace_ratio: f64,
    pub flatness: f64,
    pub sensitivity: f64,
    pub corruption: f64,
    pub runs: usize,
}

pub fn gap_correlations(reports: &[GapReport]) -> Result<GapCorrelations> {
    let ok: Vec<&GapReport> = reports.iter().filter(|r| r.failure.is_none()).collect();
    let gap: Vec<f64> = ok.iter().map(|r| r.gap).collect();
    let with = |f: fn(&GapReport) -> f64| spearman(&ok.iter().map(|r| f(r)).collect::<Vec<_>>(), &gap);
    Ok(GapCorrelations {
        tic: with(|r| r.tic)?,
        tic_fisher: with(|r| r.tic_fisher)?,
        trace_ratio: with(|r| r.trace_ratio)?,
        flatness: with(|r| r.flatness)?,
        sensitivity: with(|r| r.sensitivity)?,
        corruption: with(|r| r.corruption)?,
        runs: ok.len(),
    })
}
