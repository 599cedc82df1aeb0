//! The four information matrices of a model at a parameter point:
//! Hessian `H`, uncentered gradient covariance `C`, centered covariance `S`
//! and Fisher `F`.
//!
//! All matrices are per-sample averages (`1/N`), never sums. Per-sample work
//! runs in parallel over fixed-size index chunks that are reduced in index
//! order, so results do not depend on the thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::SymMatrix;
use crate::models::{Dataset, Family, LossOracle, Target};
use crate::scalar::Scalar;

const CHUNK: usize = 16;

/// How the Fisher expectation over `q_θ(y|x)` is evaluated.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum FisherMode {
    /// Label enumeration for classifiers, closed form for the Gaussian families.
    #[default]
    Exact,
    /// `draws` labels sampled from `q_θ(·|x_n)` for every input `x_n`.
    /// Input `n` uses the stream `n` of a ChaCha8 generator seeded with `seed`.
    MonteCarlo { draws: usize, seed: u64 },
}

/// `(H, F, C, S)` at one parameter point over one dataset.
#[derive(Clone, Debug, PartialEq)]
pub struct InfoMatrixSet<T: Scalar> {
    pub h: SymMatrix<T>,
    pub f: SymMatrix<T>,
    pub c: SymMatrix<T>,
    pub s: SymMatrix<T>,
    /// Number of samples averaged over.
    pub n: usize,
    /// 0 for exact Fisher, otherwise Monte Carlo draws per input.
    pub fisher_mc_draws: usize,
}

#[derive(Serialize, Deserialize)]
struct InfoMatrixJson {
    dim: usize,
    n: usize,
    fisher_mc_draws: usize,
    #[serde(rename = "H")]
    h: Vec<Vec<f64>>,
    #[serde(rename = "F")]
    f: Vec<Vec<f64>>,
    #[serde(rename = "C")]
    c: Vec<Vec<f64>>,
    #[serde(rename = "S")]
    s: Vec<Vec<f64>>,
}

fn rows_f64<T: Scalar>(m: &SymMatrix<T>) -> Vec<Vec<f64>> {
    m.to_rows().into_iter().map(|r| r.into_iter().map(|v| v.to_f64_lossy()).collect()).collect()
}

fn from_rows_f64<T: Scalar>(rows: &[Vec<f64>]) -> Result<SymMatrix<T>> {
    SymMatrix::from_rows(&rows.iter().map(|r| r.iter().map(|&v| T::lit(v)).collect()).collect::<Vec<_>>())
}

impl<T: Scalar> InfoMatrixSet<T> {
    pub fn dim(&self) -> usize {
        self.h.dim()
    }

    /// JSON document: `{"dim", "n", "fisher_mc_draws", "H", "F", "C", "S"}`,
    /// matrices as arrays of rows.
    pub fn to_json(&self) -> String {
        let doc = InfoMatrixJson {
            dim: self.dim(),
            n: self.n,
            fisher_mc_draws: self.fisher_mc_draws,
            h: rows_f64(&self.h),
            f: rows_f64(&self.f),
            c: rows_f64(&self.c),
            s: rows_f64(&self.s),
        };
        serde_json::to_string_pretty(&doc).expect("plain numeric document serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: InfoMatrixJson = serde_json::from_str(text).map_err(|e| Error::invalid(format!("bad JSON: {e}")))?;
        let set = Self {
            h: from_rows_f64(&doc.h)?,
            f: from_rows_f64(&doc.f)?,
            c: from_rows_f64(&doc.c)?,
            s: from_rows_f64(&doc.s)?,
            n: doc.n,
            fisher_mc_draws: doc.fisher_mc_draws,
        };
        if [&set.f, &set.c, &set.s].iter().any(|m| m.dim() != doc.dim) || set.h.dim() != doc.dim {
            return Err(Error::dims("matrix dimensions disagree with `dim`"));
        }
        Ok(set)
    }
}

/// Sums `f(0..n)` in chunks evaluated in parallel, reducing in index order.
fn ordered_sum<T, F>(n: usize, dim: usize, f: F) -> Result<SymMatrix<T>>
where
    T: Scalar,
    F: Fn(usize, &mut SymMatrix<T>) -> Result<()> + Sync,
{
    let chunks: Vec<SymMatrix<T>> = (0..n.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut acc = SymMatrix::zeros(dim);
            for i in c * CHUNK..((c + 1) * CHUNK).min(n) {
                f(i, &mut acc)?;
            }
            Ok(acc)
        })
        .collect::<Result<_>>()?;
    let mut total = SymMatrix::zeros(dim);
    for c in &chunks {
        total.add_scaled(c, T::one())?;
    }
    Ok(total)
}

fn inv_n<T: Scalar>(n: usize) -> T {
    T::one() / T::from_usize(n).unwrap()
}

fn prepare<T: Scalar>(oracle: &LossOracle<T>, data: &Dataset<T>) -> Result<()> {
    data.check_compatible(oracle.family())
}

/// `H = (1/N) Σ_n ∇²ℓ(θ, x_n, y_n)`.
pub fn compute_h<T: Scalar>(oracle: &LossOracle<T>, data: &Dataset<T>) -> Result<SymMatrix<T>> {
    prepare(oracle, data)?;
    let (xs, ys) = (data.inputs(), data.targets());
    let sum = ordered_sum(data.len(), oracle.param_dim(), |i, acc| {
        acc.add_scaled(&oracle.hessian(&xs[i], &ys[i])?, T::one())
    })?;
    Ok(sum.scale(inv_n(data.len())))
}

/// `C = (1/N) Σ_n g_n g_nᵀ` with `g_n = ∇ℓ(θ, x_n, y_n)`.
pub fn compute_c<T: Scalar>(oracle: &LossOracle<T>, data: &Dataset<T>) -> Result<SymMatrix<T>> {
    prepare(oracle, data)?;
    let (xs, ys) = (data.inputs(), data.targets());
    let sum = ordered_sum(data.len(), oracle.param_dim(), |i, acc| {
        acc.add_outer_scaled(&oracle.first_order(&xs[i], &ys[i])?.grad, T::one())
    })?;
    Ok(sum.scale(inv_n(data.len())))
}

/// `S = C − ḡ ḡᵀ`.
pub fn compute_s<T: Scalar>(oracle: &LossOracle<T>, data: &Dataset<T>) -> Result<SymMatrix<T>> {
    let mut s = compute_c(oracle, data)?;
    s.add_outer_scaled(&oracle.mean_gradient(data)?, -T::one())?;
    Ok(s)
}

/// Per-input Fisher contribution `Σ_y q(y|x) g gᵀ` (or its closed form), added into `acc`.
fn fisher_term<T: Scalar>(oracle: &LossOracle<T>, x: &[T], acc: &mut SymMatrix<T>) -> Result<()> {
    match oracle.family() {
        Family::GaussianMean { .. } => {
            let d = acc.dim();
            acc.add_scaled(&SymMatrix::identity(d), T::one())
        }
        Family::Ols { inputs, outputs } => acc.add_scaled(&kron_identity(outputs, &SymMatrix::outer(x), inputs), T::one()),
        Family::SoftmaxLinear { classes, .. } | Family::SoftmaxMlp1 { classes, .. } => {
            let probs = oracle.label_distribution(x)?;
            for (c, &p) in probs.iter().enumerate().take(classes) {
                acc.add_outer_scaled(&oracle.first_order(x, &Target::Class(c))?.grad, p)?;
            }
            Ok(())
        }
    }
}

fn fisher_mc_term<T: Scalar>(
    oracle: &LossOracle<T>,
    x: &[T],
    draws: usize,
    rng: &mut ChaCha8Rng,
    acc: &mut SymMatrix<T>,
) -> Result<()> {
    let w = inv_n::<T>(draws);
    for _ in 0..draws {
        let g = match oracle.family() {
            Family::GaussianMean { .. } => oracle
                .theta()
                .iter()
                .map(|_| {
                    // x ~ N(θ, I) gives g = θ − x = −z
                    let z: f64 = StandardNormal.sample(rng);
                    T::lit(-z)
                })
                .collect(),
            _ => {
                let y = oracle.sample_label(x, rng)?;
                oracle.first_order(x, &y)?.grad
            }
        };
        acc.add_outer_scaled(&g, w)?;
    }
    Ok(())
}

/// `F = E_x E_{y∼q_θ(·|x)}[g gᵀ]` with `x` ranging over the dataset inputs.
pub fn compute_f<T: Scalar>(oracle: &LossOracle<T>, data: &Dataset<T>, mode: FisherMode) -> Result<SymMatrix<T>> {
    prepare(oracle, data)?;
    let xs = data.inputs();
    let sum = match mode {
        FisherMode::Exact => ordered_sum(data.len(), oracle.param_dim(), |i, acc| fisher_term(oracle, &xs[i], acc))?,
        FisherMode::MonteCarlo { draws, seed } => {
            if draws == 0 {
                return Err(Error::invalid("Monte Carlo Fisher needs at least one draw"));
            }
            ordered_sum(data.len(), oracle.param_dim(), |i, acc| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(i as u64);
                fisher_mc_term(oracle, &xs[i], draws, &mut rng, acc)
            })?
        }
    };
    Ok(sum.scale(inv_n(data.len())))
}

/// Second Fisher route: `E_x E_{y∼q_θ(·|x)}[∇²ℓ]`, exact.
pub fn fisher_expected_hessian<T: Scalar>(oracle: &LossOracle<T>, data: &Dataset<T>) -> Result<SymMatrix<T>> {
    prepare(oracle, data)?;
    let xs = data.inputs();
    let sum = ordered_sum(data.len(), oracle.param_dim(), |i, acc| match oracle.family() {
        Family::GaussianMean { .. } => acc.add_scaled(&oracle.hessian(&xs[i], &Target::Unlabeled)?, T::one()),
        Family::Ols { outputs, .. } => {
            // the OLS Hessian does not depend on y
            acc.add_scaled(&oracle.hessian(&xs[i], &Target::Real(vec![T::zero(); outputs]))?, T::one())
        }
        _ => {
            let probs = oracle.label_distribution(&xs[i])?;
            for (c, &p) in probs.iter().enumerate() {
                acc.add_scaled(&oracle.hessian(&xs[i], &Target::Class(c))?, p)?;
            }
            Ok(())
        }
    })?;
    Ok(sum.scale(inv_n(data.len())))
}

/// All four matrices; each field is bit-identical to its individual computation.
pub fn compute_all<T: Scalar>(oracle: &LossOracle<T>, data: &Dataset<T>, mode: FisherMode) -> Result<InfoMatrixSet<T>> {
    let h = compute_h(oracle, data)?;
    let c = compute_c(oracle, data)?;
    let mut s = c.clone();
    s.add_outer_scaled(&oracle.mean_gradient(data)?, -T::one())?;
    let f = compute_f(oracle, data, mode)?;
    let fisher_mc_draws = match mode {
        FisherMode::Exact => 0,
        FisherMode::MonteCarlo { draws, .. } => draws,
    };
    Ok(InfoMatrixSet { h, f, c, s, n: data.len(), fisher_mc_draws })
}

/// `A ⊗ B` for square `A` (dim p) and `B` (dim q); index `(j, k) ↦ j·q + k`.
pub fn kron<T: Scalar>(a: &SymMatrix<T>, b: &SymMatrix<T>) -> SymMatrix<T> {
    let q = b.dim();
    SymMatrix::from_fn(a.dim() * q, |r, c| a.get(r / q, c / q) * b.get(r % q, c % q))
}

fn kron_identity<T: Scalar>(p: usize, b: &SymMatrix<T>, q: usize) -> SymMatrix<T> {
    debug_assert_eq!(b.dim(), q);
    kron(&SymMatrix::identity(p), b)
}

/// Population matrices of the linear-Gaussian model at `θ*` when the data
/// noise has covariance `Σ`: `H = F = I_p ⊗ E[xxᵀ]`, `C = Σ ⊗ E[xxᵀ]`, with
/// `E[xxᵀ]` the empirical second moment of `inputs`.
pub fn ols_closed_forms<T: Scalar>(
    inputs: &[Vec<T>],
    noise_cov: &SymMatrix<T>,
) -> Result<(SymMatrix<T>, SymMatrix<T>, SymMatrix<T>)> {
    let Some(first) = inputs.first() else {
        return Err(Error::invalid("need at least one input"));
    };
    let q = first.len();
    if q == 0 || inputs.iter().any(|x| x.len() != q) {
        return Err(Error::dims("inputs must share a positive dimension"));
    }
    let scale = T::one() + noise_cov.max_abs();
    if noise_cov.min_eigenvalue()? < -T::lit(1e-12) * scale {
        return Err(Error::invalid("noise covariance must be positive semidefinite"));
    }
    let mut exx = SymMatrix::zeros(q);
    for x in inputs {
        exx.add_outer_scaled(x, T::one())?;
    }
    let exx = exx.scale(inv_n(inputs.len()));
    let h = kron_identity(noise_cov.dim(), &exx, q);
    let c = kron(noise_cov, &exx);
    Ok((h.clone(), h, c))
}

/// Scale similarity `r = Tr(a) / Tr(b)`.
pub fn similarity_r<T: Scalar>(a: &SymMatrix<T>, b: &SymMatrix<T>) -> Result<T> {
    if a.dim() != b.dim() {
        return Err(Error::dims(format!("{} vs {}", a.dim(), b.dim())));
    }
    let tb = b.trace();
    if tb == T::zero() {
        return Err(Error::DivisionByZero("trace of the reference matrix is zero".into()));
    }
    Ok(a.trace() / tb)
}

/// Angle similarity `s = ⟨a, b⟩_F / (‖a‖_F ‖b‖_F)`.
pub fn similarity_s<T: Scalar>(a: &SymMatrix<T>, b: &SymMatrix<T>) -> Result<T> {
    let inner = a.frobenius_inner(b)?;
    let denom = a.frobenius_norm() * b.frobenius_norm();
    if denom == T::zero() {
        return Err(Error::DivisionByZero("zero Frobenius norm".into()));
    }
    Ok(inner / denom)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::MixtureSpec;
    use rand::Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn gaussian_data(n: usize, d: usize, seed: u64) -> Dataset<f64> {
        let mut r = rng(seed);
        Dataset::unlabeled((0..n).map(|_| (0..d).map(|_| r.random_range(-2.0..2.0)).collect()).collect()).unwrap()
    }

    fn logistic_setup(seed: u64) -> (LossOracle<f64>, Dataset<f64>) {
        let mut r = rng(seed);
        let spec = MixtureSpec { inputs: 3, classes: 3, separation: 1.5, corruption: 0.1, distribution_seed: seed };
        let data = spec.sample(40, &mut r).unwrap();
        let oracle = LossOracle::random(Family::SoftmaxLinear { inputs: 3, classes: 3 }, 0.7, &mut r).unwrap();
        (oracle, data)
    }

    fn close(a: &SymMatrix<f64>, b: &SymMatrix<f64>, tol: f64) -> bool {
        a.frobenius_dist_sq(b).unwrap().sqrt() <= tol
    }

    fn sample_mean(data: &Dataset<f64>) -> Vec<f64> {
        let d = data.input_dim();
        (0..d).map(|k| data.inputs().iter().map(|x| x[k]).sum::<f64>() / data.len() as f64).collect()
    }

    fn empirical_cov(data: &Dataset<f64>) -> SymMatrix<f64> {
        let m = sample_mean(data);
        let n = data.len() as f64;
        SymMatrix::from_fn(m.len(), |i, j| {
            data.inputs().iter().map(|x| (x[i] - m[i]) * (x[j] - m[j])).sum::<f64>() / n
        })
    }

    #[test]
    fn gaussian_mean_closed_forms() {
        let data = gaussian_data(50, 3, 1);
        let mle = LossOracle::new(Family::GaussianMean { dim: 3 }, sample_mean(&data)).unwrap();
        let set = compute_all(&mle, &data, FisherMode::Exact).unwrap();
        assert!(close(&set.h, &SymMatrix::identity(3), 1e-12));
        assert!(close(&set.f, &SymMatrix::identity(3), 1e-12));
        assert!(close(&set.c, &empirical_cov(&data), 1e-10));
        assert!(close(&set.s, &set.c, 1e-10));

        let elsewhere = LossOracle::new(Family::GaussianMean { dim: 3 }, vec![5.0, -1.0, 0.3]).unwrap();
        assert_eq!(compute_h(&elsewhere, &data).unwrap(), SymMatrix::identity(3));
    }

    #[test]
    fn single_sample_cases() {
        let (oracle, data) = logistic_setup(2);
        let one = data.subset(&[3]);
        let (x, y) = (&one.inputs()[0], &one.targets()[0]);
        assert_eq!(compute_h(&oracle, &one).unwrap(), oracle.hessian(x, y).unwrap());
        let c = compute_c(&oracle, &one).unwrap();
        assert!(close(&c, &SymMatrix::outer(&oracle.first_order(x, y).unwrap().grad), 1e-15));
        let ev = c.eigh().unwrap();
        assert!(ev.values[1].abs() < 1e-12, "rank ≤ 1");
        assert!(compute_s(&oracle, &one).unwrap().max_abs() < 1e-15);
    }

    #[test]
    fn zero_gradients_give_zero_c() {
        let theta = vec![1.0, -0.5];
        let oracle = LossOracle::new(Family::Ols { inputs: 2, outputs: 1 }, theta.clone()).unwrap();
        let inputs: Vec<Vec<f64>> = vec![vec![1.0, 2.0], vec![-1.0, 0.5], vec![0.3, 0.3]];
        let targets = inputs.iter().map(|x| Target::Real(vec![x[0] * theta[0] + x[1] * theta[1]])).collect();
        let data = Dataset::new(inputs, targets).unwrap();
        assert_eq!(compute_c(&oracle, &data).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn s_matches_two_pass_covariance() {
        let (oracle, data) = logistic_setup(3);
        let grads: Vec<Vec<f64>> = data.iter().map(|(x, y)| oracle.first_order(x, y).unwrap().grad).collect();
        let n = grads.len() as f64;
        let d = oracle.param_dim();
        let mean: Vec<f64> = (0..d).map(|k| grads.iter().map(|g| g[k]).sum::<f64>() / n).collect();
        let two_pass =
            SymMatrix::from_fn(d, |i, j| grads.iter().map(|g| (g[i] - mean[i]) * (g[j] - mean[j])).sum::<f64>() / n);
        let s = compute_s(&oracle, &data).unwrap();
        for (a, b) in s.as_slice().iter().zip(two_pass.as_slice()) {
            assert!((a - b).abs() < 1e-12);
        }
        // C − S = ḡḡᵀ, hence PSD
        let diff = compute_c(&oracle, &data).unwrap().sub(&s).unwrap();
        assert!(close(&diff, &SymMatrix::outer(&mean), 1e-10));
        assert!(diff.min_eigenvalue().unwrap() >= -1e-10);
    }

    #[test]
    fn s_equals_c_at_stationary_point() {
        let data = gaussian_data(30, 2, 4);
        let mle = LossOracle::new(Family::GaussianMean { dim: 2 }, sample_mean(&data)).unwrap();
        assert!(close(&compute_s(&mle, &data).unwrap(), &compute_c(&mle, &data).unwrap(), 1e-10));
    }

    #[test]
    fn fisher_routes_agree_for_softmax_linear() {
        for seed in 0..5 {
            let (oracle, data) = logistic_setup(10 + seed);
            let f7 = compute_f(&oracle, &data, FisherMode::Exact).unwrap();
            let f8 = fisher_expected_hessian(&oracle, &data).unwrap();
            assert!(close(&f7, &f8, 1e-10));
            assert!(f7.min_eigenvalue().unwrap() >= -1e-10);
            // a GLM Hessian is label-free, so H = F as well
            assert!(close(&compute_h(&oracle, &data).unwrap(), &f8, 1e-10));
        }
    }

    #[test]
    fn fisher_routes_agree_for_mlp_up_to_differencing() {
        let mut r = rng(20);
        let spec = MixtureSpec { inputs: 2, classes: 3, separation: 1.0, corruption: 0.0, distribution_seed: 1 };
        let data = spec.sample(10, &mut r).unwrap();
        let oracle = LossOracle::random(Family::SoftmaxMlp1 { inputs: 2, hidden: 3, classes: 3 }, 0.8, &mut r).unwrap();
        let f7 = compute_f(&oracle, &data, FisherMode::Exact).unwrap();
        let f8 = fisher_expected_hessian(&oracle, &data).unwrap();
        assert!(close(&f7, &f8, 1e-6 * (1.0 + f7.frobenius_norm())));
    }

    #[test]
    fn gaussian_fisher_is_identity() {
        let data = gaussian_data(5, 4, 5);
        let o = LossOracle::new(Family::GaussianMean { dim: 4 }, vec![0.1; 4]).unwrap();
        assert_eq!(compute_f(&o, &data, FisherMode::Exact).unwrap(), SymMatrix::identity(4));
        assert_eq!(fisher_expected_hessian(&o, &data).unwrap(), SymMatrix::identity(4));
    }

    #[test]
    fn monte_carlo_fisher_converges() {
        let (oracle, data) = logistic_setup(30);
        let data = data.subset(&[0, 1, 2, 3, 4]);
        let exact = compute_f(&oracle, &data, FisherMode::Exact).unwrap();
        let mode = FisherMode::MonteCarlo { draws: 100_000, seed: 9 };
        let mc = compute_f(&oracle, &data, mode).unwrap();
        assert!(mc.frobenius_dist_sq(&exact).unwrap().sqrt() < 5e-2 * exact.frobenius_norm());
        assert_eq!(mc, compute_f(&oracle, &data, mode).unwrap());

        let g = LossOracle::new(Family::GaussianMean { dim: 2 }, vec![0.0, 1.0]).unwrap();
        let gd = gaussian_data(2, 2, 1);
        let mc = compute_f(&g, &gd, FisherMode::MonteCarlo { draws: 100_000, seed: 1 }).unwrap();
        assert!(close(&mc, &SymMatrix::identity(2), 5e-2 * 2f64.sqrt()));
    }

    #[test]
    fn results_do_not_depend_on_thread_count() {
        let (oracle, data) = logistic_setup(40);
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let single = pool.install(|| compute_all(&oracle, &data, FisherMode::MonteCarlo { draws: 7, seed: 3 })).unwrap();
        let multi = compute_all(&oracle, &data, FisherMode::MonteCarlo { draws: 7, seed: 3 }).unwrap();
        assert_eq!(single, multi);
    }

    #[test]
    fn compute_all_matches_individual_calls() {
        let (oracle, data) = logistic_setup(41);
        let set = compute_all(&oracle, &data, FisherMode::Exact).unwrap();
        assert_eq!(set.h, compute_h(&oracle, &data).unwrap());
        assert_eq!(set.c, compute_c(&oracle, &data).unwrap());
        assert_eq!(set.s, compute_s(&oracle, &data).unwrap());
        assert_eq!(set.f, compute_f(&oracle, &data, FisherMode::Exact).unwrap());
        assert_eq!((set.n, set.fisher_mc_draws), (40, 0));
        assert_eq!(InfoMatrixSet::from_json(&set.to_json()).unwrap(), set);
    }

    #[test]
    fn ols_fisher_uses_closed_form() {
        let mut r = rng(50);
        let inputs: Vec<Vec<f64>> = (0..20).map(|_| (0..2).map(|_| r.random_range(-1.0..1.0)).collect()).collect();
        let targets = inputs.iter().map(|_| Target::Real(vec![r.random_range(-1.0..1.0), 0.0])).collect();
        let data = Dataset::new(inputs.clone(), targets).unwrap();
        let o = LossOracle::random(Family::Ols { inputs: 2, outputs: 2 }, 1.0, &mut r).unwrap();
        let f = compute_f(&o, &data, FisherMode::Exact).unwrap();
        let (h, f_closed, _) = ols_closed_forms(&inputs, &SymMatrix::identity(2)).unwrap();
        assert!(close(&f, &f_closed, 1e-12));
        assert!(close(&compute_h(&o, &data).unwrap(), &h, 1e-12));
    }

    #[test]
    fn ols_closed_form_examples() {
        let inputs = vec![vec![1.0, 0.0], vec![0.5, 2.0], vec![-1.0, 1.0]];
        let sigma2 = 0.3;
        let (h, f, c) = ols_closed_forms(&inputs, &SymMatrix::identity(1).scale(sigma2)).unwrap();
        assert_eq!(h, f);
        assert!(close(&c, &h.scale(sigma2), 1e-15));
        let (_, _, c0) = ols_closed_forms(&inputs, &SymMatrix::zeros(2)).unwrap();
        assert_eq!(c0.max_abs(), 0.0);
        assert!(ols_closed_forms(&inputs, &SymMatrix::diag(&[1.0, -1.0])).is_err());
    }

    #[test]
    fn ols_closed_form_matches_sampled_noise() {
        // anisotropic noise on a two-output model at θ*
        let mut r = rng(60);
        let theta = vec![0.5, -1.0, 2.0, 0.25];
        let chol = [[1.0, 0.0], [0.6, 0.5]];
        let sigma = SymMatrix::from_rows(&[vec![1.0, 0.6], vec![0.6, 0.61]]).unwrap();
        let n = 1_000_000;
        let base: Vec<Vec<f64>> = vec![vec![1.0, -0.5], vec![0.3, 1.2], vec![-0.8, 0.4]];
        let mut inputs = Vec::with_capacity(n);
        let mut targets = Vec::with_capacity(n);
        for i in 0..n {
            let x = base[i % base.len()].clone();
            let z: [f64; 2] = [StandardNormal.sample(&mut r), StandardNormal.sample(&mut r)];
            let y = (0..2)
                .map(|j| theta[2 * j] * x[0] + theta[2 * j + 1] * x[1] + chol[j][0] * z[0] + chol[j][1] * z[1])
                .collect();
            inputs.push(x);
            targets.push(Target::Real(y));
        }
        let data = Dataset::new(inputs, targets).unwrap();
        let o = LossOracle::new(Family::Ols { inputs: 2, outputs: 2 }, theta).unwrap();
        let sampled = compute_c(&o, &data).unwrap();
        let (_, _, closed) = ols_closed_forms(&base, &sigma).unwrap();
        assert!(sampled.frobenius_dist_sq(&closed).unwrap().sqrt() < 1e-2 * closed.frobenius_norm());
    }

    #[test]
    fn similarity_examples() {
        let a = SymMatrix::<f64>::from_rows(&[vec![2.0, 0.5], vec![0.5, 1.0]]).unwrap();
        assert_eq!(similarity_r(&a, &a).unwrap(), 1.0);
        assert!((similarity_s(&a, &a).unwrap() - 1.0).abs() < 1e-15);
        assert!((similarity_r(&a.scale(2.0), &a).unwrap() - 2.0).abs() < 1e-15);
        assert!((similarity_s(&a.scale(2.0), &a).unwrap() - 1.0).abs() < 1e-15);
        let (e1, e2) = (SymMatrix::diag(&[1.0, 0.0]), SymMatrix::diag(&[0.0, 1.0]));
        assert_eq!(similarity_r(&e1, &e2).unwrap(), 1.0);
        assert_eq!(similarity_s(&e1, &e2).unwrap(), 0.0);
        assert!(matches!(similarity_r(&e1, &SymMatrix::zeros(2)), Err(Error::DivisionByZero(_))));
        assert!(matches!(similarity_s(&SymMatrix::zeros(2), &e1), Err(Error::DivisionByZero(_))));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn psd_floor(m: &SymMatrix<f64>) -> f64 {
            -1e-10 * (1.0 + m.frobenius_norm())
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(32))]
            #[test]
            fn matrices_are_symmetric_and_ordered(seed in any::<u64>(), hidden in 1usize..4, n in 2usize..40) {
                let mut r = rng(seed);
                let spec = MixtureSpec { inputs: 2, classes: 3, separation: 2.0, corruption: 0.2, distribution_seed: seed };
                let data = spec.sample::<f64>(n, &mut r).unwrap();
                let oracle = LossOracle::random(Family::SoftmaxMlp1 { inputs: 2, hidden, classes: 3 }, 1.0, &mut r).unwrap();
                let m = compute_all(&oracle, &data, FisherMode::Exact).unwrap();
                for x in [&m.h, &m.f, &m.c, &m.s] {
                    let rows = x.to_rows();
                    for (i, row) in rows.iter().enumerate() {
                        for (j, v) in row.iter().enumerate() {
                            prop_assert_eq!(*v, rows[j][i]);
                        }
                    }
                }
                for x in [&m.f, &m.c, &m.s] {
                    prop_assert!(x.min_eigenvalue().unwrap() >= psd_floor(x));
                }
                let mut diff = m.c.clone();
                diff.add_scaled(&m.s, -1.0).unwrap();
                prop_assert!(diff.min_eigenvalue().unwrap() >= psd_floor(&m.c), "C − S is the rank-one ḡḡᵀ");
            }
        }
    }
}
