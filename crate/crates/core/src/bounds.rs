//! χ²-weighted bounds between the Frobenius distances of `H`, `F` and `C`
//! over finite discrete joints, where both sides are computed exactly.
//!
//! Each entry of a matrix difference is `Σ_i (q_i − p_i) m_i`, so
//! Cauchy–Schwarz gives `‖·‖² ≤ χ² · E[‖m‖²]` with two possible pairings:
//!
//! | direction  | divergence     | moments under |
//! |------------|----------------|---------------|
//! | `Backward` | `χ²(p ‖ q)`    | `q`           |
//! | `Forward`  | `χ²(q ‖ p)`    | `p`           |
//!
//! `F` has two routes here: `E_q[∇²ℓ]`, used against `H`, and `E_q[∇ℓ∇ℓᵀ]`,
//! used against `C`. They coincide when `q(x, y) = r(x) q_θ(y|x)`, which is
//! also what the `C − H` bound needs, together with per-sample Hessians whose
//! quadratic form in the gradient is nonnegative (true for the GLM families).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::SymMatrix;
use crate::models::{Family, LossOracle, Target};
use crate::scalar::Scalar;

/// Probability masses over a finite list of `(x, y)` points.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteJoint<T> {
    support: Vec<(Vec<T>, Target<T>)>,
    probs: Vec<T>,
}

impl<T: Scalar> DiscreteJoint<T> {
    pub fn new(support: Vec<(Vec<T>, Target<T>)>, probs: Vec<T>) -> Result<Self> {
        if support.is_empty() || support.len() != probs.len() {
            return Err(Error::dims(format!("{} support points, {} masses", support.len(), probs.len())));
        }
        if probs.iter().any(|&p| !(p >= T::zero()) || !p.is_finite()) {
            return Err(Error::invalid("masses must be finite and nonnegative"));
        }
        let total: T = probs.iter().copied().sum();
        if (total - T::one()).abs() > T::lit(1e-12) {
            return Err(Error::invalid(format!("masses sum to {total}, not 1")));
        }
        Ok(Self { support, probs })
    }

    /// `r(x_j) q_θ(c|x_j)` over every input and class: the model's own joint.
    pub fn model_joint(oracle: &LossOracle<T>, inputs: &[Vec<T>], input_weights: &[T]) -> Result<Self> {
        if inputs.len() != input_weights.len() {
            return Err(Error::dims("one weight per input is required"));
        }
        let mut support = Vec::new();
        let mut probs = Vec::new();
        for (x, &w) in inputs.iter().zip(input_weights) {
            for (c, q) in oracle.label_distribution(x)?.into_iter().enumerate() {
                support.push((x.clone(), Target::Class(c)));
                probs.push(w * q);
            }
        }
        Self::new(support, probs)
    }

    /// Same support, new masses.
    pub fn reweighted(&self, probs: Vec<T>) -> Result<Self> {
        Self::new(self.support.clone(), probs)
    }

    pub fn support(&self) -> &[(Vec<T>, Target<T>)] {
        &self.support
    }

    pub fn probs(&self) -> &[T] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }
}

/// `D_χ²(p ‖ q) = Σ_i (p_i − q_i)² / q_i`.
pub fn chi_square<T: Scalar>(p: &DiscreteJoint<T>, q: &DiscreteJoint<T>) -> Result<T> {
    if p.support != q.support {
        return Err(Error::invalid("chi-square needs identical supports"));
    }
    let mut total = T::zero();
    for (&pi, &qi) in p.probs.iter().zip(&q.probs) {
        if qi <= T::zero() {
            return Err(Error::DivisionByZero("reference distribution has a zero-mass point".into()));
        }
        let diff = pi - qi;
        total += diff * diff / qi;
    }
    Ok(total)
}

/// `(β₁, β₂) = (E[‖∇²ℓ‖²_F], E[‖∇ℓ∇ℓᵀ‖²_F])` under `dist`.
pub fn beta_moments<T: Scalar>(oracle: &LossOracle<T>, dist: &DiscreteJoint<T>) -> Result<(T, T)> {
    let (mut b1, mut b2) = (T::zero(), T::zero());
    for ((x, y), &w) in dist.support.iter().zip(&dist.probs) {
        let hess = oracle.hessian(x, y)?;
        let g = oracle.first_order(x, y)?.grad;
        let g2: T = g.iter().map(|&v| v * v).sum();
        b1 += w * hess.frobenius_norm_sq();
        b2 += w * g2 * g2;
    }
    Ok((b1, b2))
}

/// Which Cauchy–Schwarz pairing to use; see the module docs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Backward,
    Forward,
}

/// Both sides of the three bounds for one `(p, q, θ)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundReport {
    pub direction: Direction,
    /// `‖E_q[∇²ℓ] − H‖²`
    pub lhs_fh: f64,
    /// `‖E_q[∇ℓ∇ℓᵀ] − C‖²`
    pub lhs_fc: f64,
    /// `‖C − H‖²`
    pub lhs_ch: f64,
    /// `D_χ²(q ‖ p)`, `None` when `p` has a zero-mass point.
    pub chi2_forward: Option<f64>,
    /// `D_χ²(p ‖ q)`, `None` when `q` has a zero-mass point.
    pub chi2_backward: Option<f64>,
    pub beta1: f64,
    pub beta2: f64,
    pub slack_fh: f64,
    pub slack_fc: f64,
    pub slack_ch: f64,
    /// `‖E_q[∇ℓ∇ℓᵀ] − E_q[∇²ℓ]‖²`; zero for a model-consistent `q`.
    pub fisher_route_gap: f64,
}

impl BoundReport {
    pub fn min_slack(&self) -> f64 {
        self.slack_fh.min(self.slack_fc).min(self.slack_ch)
    }
}

struct Moments<T: Scalar> {
    hess: SymMatrix<T>,
    outer: SymMatrix<T>,
}

fn moments<T: Scalar>(oracle: &LossOracle<T>, dist: &DiscreteJoint<T>) -> Result<Moments<T>> {
    let d = oracle.param_dim();
    let (mut hess, mut outer) = (SymMatrix::zeros(d), SymMatrix::zeros(d));
    for ((x, y), &w) in dist.support.iter().zip(&dist.probs) {
        hess.add_scaled(&oracle.hessian(x, y)?, w)?;
        outer.add_outer_scaled(&oracle.first_order(x, y)?.grad, w)?;
    }
    Ok(Moments { hess, outer })
}

/// Evaluates `‖F−H‖² ≤ β₁χ²`, `‖F−C‖² ≤ β₂χ²` and `‖C−H‖² ≤ (β₁+β₂)χ²`
/// with `H, C` under the data joint `p` and `F` under the model joint `q`.
pub fn verify_bounds<T: Scalar>(
    oracle: &LossOracle<T>,
    p: &DiscreteJoint<T>,
    q: &DiscreteJoint<T>,
    direction: Direction,
) -> Result<BoundReport> {
    let under_p = moments(oracle, p)?;
    let under_q = moments(oracle, q)?;
    let (h, c) = (&under_p.hess, &under_p.outer);
    let (f_hess, f_outer) = (&under_q.hess, &under_q.outer);

    let chi2_backward = optional_chi2(p, q)?;
    let chi2_forward = optional_chi2(q, p)?;
    let (chi2, (beta1, beta2)) = match direction {
        Direction::Backward => (chi2_backward, beta_moments(oracle, q)?),
        Direction::Forward => (chi2_forward, beta_moments(oracle, p)?),
    };
    let Some(chi2) = chi2 else {
        return Err(Error::DivisionByZero(format!("{direction:?} bound needs a strictly positive reference")));
    };

    let lhs_fh = f_hess.frobenius_dist_sq(h)?;
    let lhs_fc = f_outer.frobenius_dist_sq(c)?;
    let lhs_ch = c.frobenius_dist_sq(h)?;
    let f = |v: T| v.to_f64_lossy();
    Ok(BoundReport {
        direction,
        lhs_fh: f(lhs_fh),
        lhs_fc: f(lhs_fc),
        lhs_ch: f(lhs_ch),
        chi2_forward: chi2_forward.map(f),
        chi2_backward: chi2_backward.map(f),
        beta1: f(beta1),
        beta2: f(beta2),
        slack_fh: f(beta1 * chi2 - lhs_fh),
        slack_fc: f(beta2 * chi2 - lhs_fc),
        slack_ch: f((beta1 + beta2) * chi2 - lhs_ch),
        fisher_route_gap: f(f_outer.frobenius_dist_sq(f_hess)?),
    })
}

fn optional_chi2<T: Scalar>(a: &DiscreteJoint<T>, b: &DiscreteJoint<T>) -> Result<Option<T>> {
    match chi_square(a, b) {
        Ok(v) => Ok(Some(v)),
        Err(Error::DivisionByZero(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Random softmax-linear trials: `q` is the model joint over a few weighted
/// inputs and `p` reweights the same support with random masses.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrialSpec {
    pub inputs: usize,
    pub classes: usize,
    /// Distinct inputs in the support.
    pub support_inputs: usize,
    pub param_scale: f64,
    /// Inputs are uniform on `[-input_range, input_range]`.
    pub input_range: f64,
    /// Smallest unnormalized weight; keeps both joints strictly positive.
    pub min_weight: f64,
}

impl Default for TrialSpec {
    fn default() -> Self {
        Self { inputs: 2, classes: 3, support_inputs: 4, param_scale: 1.0, input_range: 2.0, min_weight: 0.05 }
    }
}

/// Uniform weights on `[min_weight, 1)` normalized to sum to one.
fn random_simplex(n: usize, min_weight: f64, rng: &mut impl Rng) -> Vec<f64> {
    let w: Vec<f64> = (0..n).map(|_| rng.random_range(min_weight..1.0)).collect();
    let total: f64 = w.iter().sum();
    w.into_iter().map(|v| v / total).collect()
}

/// One random `(θ, p, q)` draw.
pub fn random_trial(spec: &TrialSpec, rng: &mut impl Rng) -> Result<(LossOracle<f64>, DiscreteJoint<f64>, DiscreteJoint<f64>)> {
    if !(spec.min_weight > 0.0 && spec.min_weight < 1.0) || spec.support_inputs == 0 {
        return Err(Error::invalid("trial needs support inputs and a min weight in (0, 1)"));
    }
    let family = Family::SoftmaxLinear { inputs: spec.inputs, classes: spec.classes };
    let oracle = LossOracle::random(family, spec.param_scale, rng)?;
    let inputs: Vec<Vec<f64>> = (0..spec.support_inputs)
        .map(|_| (0..spec.inputs).map(|_| rng.random_range(-spec.input_range..=spec.input_range)).collect())
        .collect();
    let q = DiscreteJoint::model_joint(&oracle, &inputs, &random_simplex(spec.support_inputs, spec.min_weight, rng))?;
    let p = q.reweighted(random_simplex(q.len(), spec.min_weight, rng))?;
    Ok((oracle, p, q))
}

/// One evaluated trial.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrialRecord {
    pub trial: usize,
    /// `p` was set equal to `q`.
    pub equal: bool,
    pub report: BoundReport,
}

/// `trials` random draws evaluated in both directions, followed by
/// `equal_trials` draws with `p = q`. Trial `i` uses stream `i` of a
/// generator seeded with `seed`.
pub fn bounds_sweep(spec: &TrialSpec, trials: usize, equal_trials: usize, seed: u64) -> Result<Vec<TrialRecord>> {
    let mut out = Vec::with_capacity(2 * (trials + equal_trials));
    for i in 0..trials + equal_trials {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64);
        let (oracle, p, q) = random_trial(spec, &mut rng)?;
        let equal = i >= trials;
        let p = if equal { q.clone() } else { p };
        for direction in [Direction::Backward, Direction::Forward] {
            out.push(TrialRecord { trial: i, equal, report: verify_bounds(&oracle, &p, &q, direction)? });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::Family;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn simplex(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let w: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..1.0)).collect();
        let s: f64 = w.iter().sum();
        w.into_iter().map(|v| v / s).collect()
    }

    fn unlabeled(points: &[f64]) -> Vec<(Vec<f64>, Target<f64>)> {
        points.iter().map(|&x| (vec![x], Target::Unlabeled)).collect()
    }

    #[test]
    fn joint_validation() {
        assert!(DiscreteJoint::new(unlabeled(&[0.0, 1.0]), vec![0.5, 0.6]).is_err());
        assert!(DiscreteJoint::new(unlabeled(&[0.0, 1.0]), vec![1.5, -0.5]).is_err());
        assert!(DiscreteJoint::new(unlabeled(&[0.0]), vec![0.5, 0.5]).is_err());
        assert!(DiscreteJoint::new(unlabeled(&[0.0, 1.0]), vec![1.0, 0.0]).is_ok());
    }

    #[test]
    fn chi_square_examples() {
        let p = DiscreteJoint::new(unlabeled(&[0.0, 1.0]), vec![1.0, 0.0]).unwrap();
        let q = p.reweighted(vec![0.5, 0.5]).unwrap();
        assert_eq!(chi_square(&p, &q).unwrap(), 1.0);
        assert_eq!(chi_square(&q, &q).unwrap(), 0.0);
        assert!(matches!(chi_square(&q, &p), Err(Error::DivisionByZero(_))));
        let other = DiscreteJoint::new(unlabeled(&[0.0, 2.0]), vec![0.5, 0.5]).unwrap();
        assert!(chi_square(&q, &other).is_err());

        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pts: Vec<f64> = (0..20).map(f64::from).collect();
        let p = DiscreteJoint::new(unlabeled(&pts), simplex(20, &mut rng)).unwrap();
        let q = p.reweighted(simplex(20, &mut rng)).unwrap();
        let mut looped = 0.0;
        for i in 0..20 {
            looped += (p.probs()[i] - q.probs()[i]).powi(2) / q.probs()[i];
        }
        assert_eq!(chi_square(&p, &q).unwrap(), looped);
    }

    #[test]
    fn chi_square_zero_iff_equal() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let pts: Vec<f64> = (0..8).map(f64::from).collect();
        for _ in 0..50 {
            let p = DiscreteJoint::new(unlabeled(&pts), simplex(8, &mut rng)).unwrap();
            let q = p.reweighted(simplex(8, &mut rng)).unwrap();
            let max_diff = p.probs().iter().zip(q.probs()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert_eq!(chi_square(&p, &q).unwrap() == 0.0, max_diff < 1e-14);
            assert_eq!(chi_square(&p, &p).unwrap(), 0.0);
        }
    }

    #[test]
    fn beta_examples() {
        let oracle = LossOracle::new(Family::GaussianMean { dim: 3 }, vec![0.5, 0.0, 1.0]).unwrap();
        let support = vec![(vec![0.0, 1.0, 2.0], Target::Unlabeled), (vec![1.0, 1.0, 1.0], Target::Unlabeled)];
        let q = DiscreteJoint::new(support.clone(), vec![0.3, 0.7]).unwrap();
        let (b1, b2) = beta_moments(&oracle, &q).unwrap();
        assert!(f64::abs(b1 - 3.0) < 1e-15);
        // ‖ggᵀ‖²_F = ‖g‖⁴ with g = θ − x
        let brute = 0.3 * (0.25f64 + 1.0 + 1.0).powi(2) + 0.7 * (0.25f64 + 1.0 + 0.0).powi(2);
        assert!((b2 - brute).abs() < 1e-12);

        let at_points = LossOracle::new(Family::GaussianMean { dim: 3 }, vec![1.0, 1.0, 1.0]).unwrap();
        let single = DiscreteJoint::new(vec![support[1].clone()], vec![1.0]).unwrap();
        assert_eq!(beta_moments(&at_points, &single).unwrap().1, 0.0);
    }

    #[test]
    fn gaussian_two_point_bound() {
        let oracle = LossOracle::new(Family::GaussianMean { dim: 1 }, vec![0.2]).unwrap();
        let p = DiscreteJoint::new(unlabeled(&[-1.0, 2.0]), vec![0.8, 0.2]).unwrap();
        let q = p.reweighted(vec![0.4, 0.6]).unwrap();
        for dir in [Direction::Backward, Direction::Forward] {
            let r = verify_bounds(&oracle, &p, &q, dir).unwrap();
            assert_eq!(r.lhs_fh, 0.0);
            assert!(r.slack_fh >= 0.0 && r.slack_fc >= -1e-9);
        }
    }

    fn random_logistic_trial(rng: &mut ChaCha8Rng) -> (LossOracle<f64>, DiscreteJoint<f64>, DiscreteJoint<f64>) {
        random_trial(&TrialSpec::default(), rng).unwrap()
    }

    #[test]
    fn random_logistic_trials_never_violate() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let (oracle, p, q) = random_logistic_trial(&mut rng);
            for dir in [Direction::Backward, Direction::Forward] {
                let r = verify_bounds(&oracle, &p, &q, dir).unwrap();
                assert!(r.min_slack() >= -1e-9, "{r:?}");
                assert!(r.fisher_route_gap < 1e-20);
            }
        }
    }

    #[test]
    fn equal_joints_give_equal_matrices() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (oracle, _, q) = random_logistic_trial(&mut rng);
        for dir in [Direction::Backward, Direction::Forward] {
            let r = verify_bounds(&oracle, &q, &q, dir).unwrap();
            assert!(r.lhs_fh < 1e-20 && r.lhs_fc < 1e-20 && r.lhs_ch < 1e-20);
            assert_eq!((r.slack_fh, r.chi2_backward, r.chi2_forward), (0.0 - r.lhs_fh, Some(0.0), Some(0.0)));
        }
    }

    #[test]
    fn sweep_is_reproducible() {
        let a = bounds_sweep(&TrialSpec::default(), 5, 2, 9).unwrap();
        assert_eq!(a.len(), 14);
        assert_eq!(a, bounds_sweep(&TrialSpec::default(), 5, 2, 9).unwrap());
        assert!(a.iter().filter(|r| r.equal).all(|r| r.report.lhs_ch < 1e-20));
    }

    #[test]
    fn zero_mass_reference_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (oracle, p, q) = random_logistic_trial(&mut rng);
        let mut probs = p.probs().to_vec();
        let moved = probs[0];
        probs[0] = 0.0;
        probs[1] += moved;
        let p0 = p.reweighted(probs).unwrap();
        let r = verify_bounds(&oracle, &p0, &q, Direction::Backward).unwrap();
        assert!(r.chi2_forward.is_none() && r.min_slack() >= -1e-9);
        assert!(matches!(verify_bounds(&oracle, &p0, &q, Direction::Forward), Err(Error::DivisionByZero(_))));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]
            #[test]
            fn random_trials_satisfy_every_bound(seed in any::<u64>(), classes in 2usize..5, support in 1usize..6) {
                let spec = TrialSpec { classes, support_inputs: support, ..TrialSpec::default() };
                let (oracle, p, q) = random_trial(&spec, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
                for direction in [Direction::Forward, Direction::Backward] {
                    let r = verify_bounds(&oracle, &p, &q, direction).unwrap();
                    let scale = 1.0 + r.lhs_fh.max(r.lhs_fc).max(r.lhs_ch);
                    prop_assert!(r.min_slack() >= -1e-10 * scale, "{direction:?}: {r:?}");
                    prop_assert!(r.fisher_route_gap < 1e-18 * scale.powi(2) + 1e-20);
                }
            }
        }
    }
}
