//! Exact moment dynamics of noisy gradient methods on quadratics.
//!
//! The objective is `f(θ) = ½ (θ − θ*)ᵀ H (θ − θ*)` and every gradient query
//! returns `H(θ − θ*) + ε` with `E[ε] = 0`, `E[εεᵀ] = S`. Three methods:
//!
//! * stochastic gradient, `θ ← θ − α g`;
//! * preconditioned gradient, `θ ← θ − α M g` (Newton when `M = H⁻¹`);
//! * Polyak momentum with `v₀ = 0`, `θ_{t+1} = θ_t − α v_t`,
//!   `v_{t+1} = γ v_t + g(θ_{t+1})`, i.e. the joint linear map
//!   `[θ; v] ← [[I, −αI], [H, γI − αH]] [θ; v] + [0; ε]`.
//!
//! Moments are tracked about `θ*`. When `H`, `S` and `M` are all diagonal,
//! coordinates decouple and a per-coordinate path is used; the dense path
//! handles everything else and is kept as a cross-check.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::linalg::{commutator_norm, Matrix, SymMatrix};
use crate::scalar::Scalar;

/// Suboptimality of the start point under [`Theta0Mode::UnitSuboptUniform`].
pub const UNIT_SUBOPT_DELTA0: f64 = 10.0;
/// Commutator norm below which matrices count as simultaneously diagonalizable.
pub const COMMUTE_TOL: f64 = 1e-10;
/// Step budget of [`steps_to_threshold`].
pub const DEFAULT_STEP_CAP: usize = 10_000_000;
/// Momentum values of the joint `(α, γ)` search.
pub const DEFAULT_GAMMA_GRID: [f64; 5] = [0.5, 0.8, 0.9, 0.95, 0.99];

fn lit<T: Scalar>(v: f64) -> T {
    T::lit(v)
}

/// `f(θ) = ½ (θ − θ*)ᵀ H (θ − θ*)` with gradient-noise covariance `S`.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadraticProblem<T: Scalar> {
    h: SymMatrix<T>,
    theta_star: Vec<T>,
    s: SymMatrix<T>,
}

impl<T: Scalar> QuadraticProblem<T> {
    pub fn new(h: SymMatrix<T>, theta_star: Vec<T>, s: SymMatrix<T>) -> Result<Self> {
        if h.dim() != s.dim() || h.dim() != theta_star.len() {
            return Err(Error::dims(format!("H {}, S {}, θ* {}", h.dim(), s.dim(), theta_star.len())));
        }
        if h.min_eigenvalue()? <= T::zero() {
            return Err(Error::invalid("H must be positive definite"));
        }
        if s.min_eigenvalue()? < -lit::<T>(1e-12) {
            return Err(Error::invalid("S must be positive semidefinite"));
        }
        Ok(Self { h, theta_star, s })
    }

    pub fn dim(&self) -> usize {
        self.h.dim()
    }

    pub fn h(&self) -> &SymMatrix<T> {
        &self.h
    }

    pub fn s(&self) -> &SymMatrix<T> {
        &self.s
    }

    pub fn theta_star(&self) -> &[T] {
        &self.theta_star
    }

    /// Same curvature and optimum, noise replaced.
    pub fn with_noise(&self, s: SymMatrix<T>) -> Result<Self> {
        Self::new(self.h.clone(), self.theta_star.clone(), s)
    }

    /// `f(θ) − f(θ*)`.
    pub fn subopt(&self, theta: &[T]) -> Result<T> {
        let e: Vec<T> = theta.iter().zip(&self.theta_star).map(|(&a, &b)| a - b).collect();
        Ok(lit::<T>(0.5) * self.h.quadform(&e)?)
    }

    fn is_diagonal(&self) -> bool {
        self.h.is_diagonal() && self.s.is_diagonal()
    }
}

/// How the protocol chooses `θ₀`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Theta0Mode {
    /// `θ₀ = c·1` with `c` chosen so that `f(θ₀) − f(θ*) = 10`.
    UnitSuboptUniform,
    /// `θ₀ = 1`.
    Ones,
    Explicit(Vec<f64>),
}

impl fmt::Display for Theta0Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Theta0Mode::UnitSuboptUniform => f.write_str("unit-subopt-uniform"),
            Theta0Mode::Ones => f.write_str("ones"),
            Theta0Mode::Explicit(v) => {
                let parts: Vec<String> = v.iter().map(f64::to_string).collect();
                write!(f, "explicit:{}", parts.join(","))
            }
        }
    }
}

impl FromStr for Theta0Mode {
    type Err = Error;

    /// `unit-subopt-uniform`, `ones`, or `explicit:v1,v2,...`.
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "unit-subopt-uniform" => Ok(Theta0Mode::UnitSuboptUniform),
            "ones" => Ok(Theta0Mode::Ones),
            _ => match s.strip_prefix("explicit:") {
                Some(list) => list
                    .split(',')
                    .map(|v| v.trim().parse::<f64>().map_err(|e| Error::invalid(format!("bad θ0 entry {v:?}: {e}"))))
                    .collect::<Result<Vec<_>>>()
                    .map(Theta0Mode::Explicit),
                None => Err(Error::invalid(format!("unknown θ0 mode {s:?}"))),
            },
        }
    }
}

/// `S = c · H^β` with `c` fixed by `Tr(S) = trace_target`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseGeometry {
    pub beta: i32,
    pub trace_target: f64,
}

impl NoiseGeometry {
    pub fn noise_for<T: Scalar>(&self, h: &SymMatrix<T>) -> Result<SymMatrix<T>> {
        let shape = if h.is_diagonal() {
            SymMatrix::diag(&h.diagonal().iter().map(|v| v.powi(self.beta)).collect::<Vec<_>>())
        } else {
            h.eigh()?.map_spectrum(|v| v.powi(self.beta))
        };
        let tr = shape.trace();
        if !(tr > T::zero()) {
            return Err(Error::DegenerateSpectrum("H^β has no positive trace".into()));
        }
        Ok(shape.scale(lit::<T>(self.trace_target) / tr))
    }
}

/// The benchmark quadratic: `H = diag(1², …, d²)`, `θ* = 0`,
/// `S = c·H^β · noise_scale` with `Tr(c·H^β) = d`.
pub fn make_problem<T: Scalar>(d: usize, beta: i32, theta0_mode: &Theta0Mode) -> Result<(QuadraticProblem<T>, Vec<T>)> {
    make_problem_scaled(d, beta, 1.0, theta0_mode)
}

pub fn make_problem_scaled<T: Scalar>(
    d: usize,
    beta: i32,
    noise_scale: f64,
    theta0_mode: &Theta0Mode,
) -> Result<(QuadraticProblem<T>, Vec<T>)> {
    if d == 0 {
        return Err(Error::invalid("dimension must be at least 1"));
    }
    if !(noise_scale >= 0.0) {
        return Err(Error::invalid("noise scale must be nonnegative"));
    }
    let h = SymMatrix::diag(&(1..=d).map(|i| T::from_usize(i * i).unwrap()).collect::<Vec<_>>());
    let s = NoiseGeometry { beta, trace_target: d as f64 }.noise_for(&h)?.scale(lit(noise_scale));
    let problem = QuadraticProblem::new(h, vec![T::zero(); d], s)?;
    let theta0 = initial_point(&problem, theta0_mode)?;
    Ok((problem, theta0))
}

/// `θ₀` for a problem under the given convention.
pub fn initial_point<T: Scalar>(p: &QuadraticProblem<T>, mode: &Theta0Mode) -> Result<Vec<T>> {
    let d = p.dim();
    let offset = match mode {
        Theta0Mode::Ones => vec![T::one(); d],
        Theta0Mode::UnitSuboptUniform => {
            // ½ c² 1ᵀH1 = Δ₀
            let ones = vec![T::one(); d];
            let c = (lit::<T>(2.0 * UNIT_SUBOPT_DELTA0) / p.h.quadform(&ones)?).sqrt();
            return Ok(p.theta_star.iter().map(|&t| t + c).collect());
        }
        Theta0Mode::Explicit(v) => {
            if v.len() != d {
                return Err(Error::dims(format!("explicit θ0 has {} entries, problem has {d}", v.len())));
            }
            return Ok(v.iter().map(|&x| lit(x)).collect());
        }
    };
    Ok(p.theta_star.iter().zip(offset).map(|(&t, o)| t + o).collect())
}

/// Update rule and its constants.
#[derive(Clone, Debug, PartialEq)]
pub enum Method<T: Scalar> {
    Sg,
    Preconditioned(SymMatrix<T>),
    Polyak { gamma: T },
}

#[derive(Clone, Debug, PartialEq)]
pub struct MethodSpec<T: Scalar> {
    pub method: Method<T>,
    pub alpha: T,
}

impl<T: Scalar> MethodSpec<T> {
    fn check_alpha(alpha: T) -> Result<()> {
        if alpha > T::zero() && alpha.is_finite() {
            Ok(())
        } else {
            Err(Error::invalid("stepsize must be positive and finite"))
        }
    }

    pub fn sg(alpha: T) -> Result<Self> {
        Self::check_alpha(alpha)?;
        Ok(Self { method: Method::Sg, alpha })
    }

    pub fn preconditioned(m: SymMatrix<T>, alpha: T) -> Result<Self> {
        Self::check_alpha(alpha)?;
        if m.min_eigenvalue()? <= T::zero() {
            return Err(Error::invalid("preconditioner must be positive definite"));
        }
        Ok(Self { method: Method::Preconditioned(m), alpha })
    }

    /// Preconditioner `M = H⁻¹` (elementwise reciprocal when `H` is diagonal).
    pub fn newton(p: &QuadraticProblem<T>, alpha: T) -> Result<Self> {
        let m = if p.h.is_diagonal() {
            SymMatrix::diag(&p.h.diagonal().iter().map(|&v| T::one() / v).collect::<Vec<_>>())
        } else {
            p.h.eigh()?.map_spectrum(|v| T::one() / v)
        };
        Self::preconditioned(m, alpha)
    }

    pub fn polyak(alpha: T, gamma: T) -> Result<Self> {
        Self::check_alpha(alpha)?;
        if !(gamma >= T::zero() && gamma < T::one()) {
            return Err(Error::invalid("momentum must lie in [0, 1)"));
        }
        Ok(Self { method: Method::Polyak { gamma }, alpha })
    }

    pub fn gamma(&self) -> Option<T> {
        match self.method {
            Method::Polyak { gamma } => Some(gamma),
            _ => None,
        }
    }

    fn preconditioner(&self, d: usize) -> SymMatrix<T> {
        match &self.method {
            Method::Preconditioned(m) => m.clone(),
            _ => SymMatrix::identity(d),
        }
    }

    fn check_dims(&self, p: &QuadraticProblem<T>) -> Result<()> {
        if let Method::Preconditioned(m) = &self.method {
            if m.dim() != p.dim() {
                return Err(Error::dims(format!("preconditioner {} vs problem {}", m.dim(), p.dim())));
            }
        }
        Ok(())
    }
}

/// Velocity blocks of the joint `[θ; v]` moments.
#[derive(Clone, Debug, PartialEq)]
pub struct VelocityMoments<T: Scalar> {
    /// `E[v]`
    pub delta_v: Vec<T>,
    /// `E[(θ − θ*) vᵀ]`
    pub sigma_theta_v: Matrix<T>,
    /// `E[v vᵀ]`
    pub sigma_vv: SymMatrix<T>,
}

/// Exact first and second moments of the iterate at step `t`.
#[derive(Clone, Debug, PartialEq)]
pub struct MomentState<T: Scalar> {
    pub t: usize,
    /// `E[θ_t − θ*]`
    pub delta: Vec<T>,
    /// `E[(θ_t − θ*)(θ_t − θ*)ᵀ]`
    pub sigma: SymMatrix<T>,
    pub velocity: Option<VelocityMoments<T>>,
}

impl<T: Scalar> MomentState<T> {
    /// Deterministic start at `θ₀` (and `v₀ = 0` for momentum).
    pub fn initial(p: &QuadraticProblem<T>, m: &MethodSpec<T>, theta0: &[T]) -> Result<Self> {
        if theta0.len() != p.dim() {
            return Err(Error::dims(format!("θ0 has {} entries, problem has {}", theta0.len(), p.dim())));
        }
        let d = p.dim();
        let delta: Vec<T> = theta0.iter().zip(&p.theta_star).map(|(&a, &b)| a - b).collect();
        let sigma = SymMatrix::outer(&delta);
        let velocity = matches!(m.method, Method::Polyak { .. }).then(|| VelocityMoments {
            delta_v: vec![T::zero(); d],
            sigma_theta_v: Matrix::zeros(d, d),
            sigma_vv: SymMatrix::zeros(d),
        });
        Ok(Self { t: 0, delta, sigma, velocity })
    }
}

/// `E[Δ_t] = ½ Tr(H Σ_t)`.
pub fn expected_subopt<T: Scalar>(p: &QuadraticProblem<T>, s: &MomentState<T>) -> Result<T> {
    Ok(lit::<T>(0.5) * p.h.frobenius_inner(&s.sigma)?)
}

fn sym_of<T: Scalar>(m: &Matrix<T>) -> Result<SymMatrix<T>> {
    m.symmetric_part()
}

/// Dense one-step maps, precomputed per (problem, method).
enum DenseMap<T: Scalar> {
    Preconditioned {
        a: Matrix<T>,
        noise: SymMatrix<T>,
    },
    Polyak {
        alpha: T,
        h: Matrix<T>,
        b: Matrix<T>,
        h_sym: SymMatrix<T>,
        b_sym: SymMatrix<T>,
        s: SymMatrix<T>,
    },
}

impl<T: Scalar> DenseMap<T> {
    fn new(p: &QuadraticProblem<T>, m: &MethodSpec<T>) -> Result<Self> {
        m.check_dims(p)?;
        let d = p.dim();
        let alpha = m.alpha;
        Ok(match m.method {
            Method::Polyak { gamma } => {
                let b_sym = SymMatrix::identity(d).scale(gamma).sub(&p.h.scale(alpha))?;
                DenseMap::Polyak {
                    alpha,
                    h: p.h.to_matrix(),
                    b: b_sym.to_matrix(),
                    h_sym: p.h.clone(),
                    b_sym,
                    s: p.s.clone(),
                }
            }
            _ => {
                let mm = m.preconditioner(d).to_matrix();
                let a = Matrix::identity(d).sub(&mm.matmul(&p.h.to_matrix())?.scale(alpha))?;
                let noise = p.s.congruence(&mm)?.scale(alpha * alpha);
                DenseMap::Preconditioned { a, noise }
            }
        })
    }

    fn step(&self, s: &MomentState<T>) -> Result<MomentState<T>> {
        match self {
            DenseMap::Preconditioned { a, noise } => {
                let delta = a.matvec(&s.delta)?;
                let mut sigma = s.sigma.congruence(a)?;
                sigma.add_scaled(noise, T::one())?;
                Ok(MomentState { t: s.t + 1, delta, sigma, velocity: None })
            }
            DenseMap::Polyak { alpha, h, b, h_sym, b_sym, s: noise } => {
                let vel = s.velocity.as_ref().ok_or_else(|| Error::invalid("momentum state lacks velocity blocks"))?;
                let alpha = *alpha;
                let two = lit::<T>(2.0);
                let stv = &vel.sigma_theta_v;
                let stt = &s.sigma;
                let svv = &vel.sigma_vv;

                let delta: Vec<T> = s.delta.iter().zip(&vel.delta_v).map(|(&t, &v)| t - alpha * v).collect();
                let hd = h_sym.matvec(&s.delta)?;
                let bdv = b_sym.matvec(&vel.delta_v)?;
                let delta_v: Vec<T> = hd.iter().zip(&bdv).map(|(&a, &c)| a + c).collect();

                // Σθθ' = Σθθ − α(Σθv + Σvθ) + α²Σvv
                let mut sigma = stt.clone();
                sigma.add_scaled(&sym_of(stv)?, -two * alpha)?;
                sigma.add_scaled(svv, alpha * alpha)?;

                // Σθv' = Σθθ H + Σθv B − α Σvθ H − α Σvv B
                let svt = stv.transpose();
                let stv_next = stt
                    .to_matrix()
                    .matmul(h)?
                    .add(&stv.matmul(b)?)?
                    .sub(&svt.matmul(h)?.scale(alpha))?
                    .sub(&svv.to_matrix().matmul(b)?.scale(alpha))?;

                // Σvv' = H Σθθ H + H Σθv B + B Σvθ H + B Σvv B + S
                let mut svv_next = stt.congruence(h)?;
                svv_next.add_scaled(&sym_of(&h.matmul(stv)?.matmul(b)?)?, two)?;
                svv_next.add_scaled(&svv.congruence(b)?, T::one())?;
                svv_next.add_scaled(noise, T::one())?;

                Ok(MomentState {
                    t: s.t + 1,
                    delta,
                    sigma,
                    velocity: Some(VelocityMoments { delta_v, sigma_theta_v: stv_next, sigma_vv: svv_next }),
                })
            }
        }
    }
}

/// One exact step of the moment recursion.
pub fn step_moments<T: Scalar>(p: &QuadraticProblem<T>, m: &MethodSpec<T>, s: &MomentState<T>) -> Result<MomentState<T>> {
    DenseMap::new(p, m)?.step(s)
}

/// Eigenvalues of `M^{1/2} H M^{1/2}`, i.e. of `MH`.
fn preconditioned_curvatures<T: Scalar>(p: &QuadraticProblem<T>, m: &SymMatrix<T>) -> Result<Vec<T>> {
    if m.is_diagonal() && p.h.is_diagonal() {
        return Ok(m.diagonal().iter().zip(p.h.diagonal()).map(|(&a, b)| a * b).collect());
    }
    let root = m.eigh()?.map_spectrum(|v| v.max(T::zero()).sqrt());
    Ok(p.h.congruence(&root.to_matrix())?.eigh()?.values)
}

fn curvatures<T: Scalar>(p: &QuadraticProblem<T>) -> Result<Vec<T>> {
    if p.h.is_diagonal() {
        Ok(p.h.diagonal())
    } else {
        Ok(p.h.eigh()?.values)
    }
}

/// Whether the mean and covariance recursions contract.
pub fn is_stable<T: Scalar>(p: &QuadraticProblem<T>, m: &MethodSpec<T>) -> Result<bool> {
    m.check_dims(p)?;
    let two = lit::<T>(2.0);
    Ok(match m.method {
        Method::Polyak { gamma } => {
            let upper = two * (T::one() + gamma);
            curvatures(p)?.into_iter().all(|h| m.alpha * h > T::zero() && m.alpha * h < upper)
        }
        _ => preconditioned_curvatures(p, &m.preconditioner(p.dim()))?
            .into_iter()
            .all(|l| m.alpha * l > T::zero() && m.alpha * l < two),
    })
}

/// Stationary `E[Δ]` of preconditioned SG: `(α/2) Tr((2I − αMH)⁻¹ M S)`.
pub fn limit_cycle_sg<T: Scalar>(p: &QuadraticProblem<T>, alpha: T, m: &SymMatrix<T>) -> Result<T> {
    let spec = MethodSpec::preconditioned(m.clone(), alpha)?;
    spec.check_dims(p)?;
    let tol = lit::<T>(COMMUTE_TOL);
    if commutator_norm(&p.h, &p.s)? >= tol || commutator_norm(&p.h, m)? >= tol || commutator_norm(m, &p.s)? >= tol {
        return Err(Error::Unsupported("H, S and M are not simultaneously diagonalizable".into()));
    }
    if !is_stable(p, &spec)? {
        return Err(Error::Divergence { step: 0 });
    }
    let half = lit::<T>(0.5);
    if p.is_diagonal() && m.is_diagonal() {
        let (h, s, md) = (p.h.diagonal(), p.s.diagonal(), m.diagonal());
        let total: T = (0..p.dim()).map(|i| md[i] * s[i] / (lit::<T>(2.0) - alpha * md[i] * h[i])).sum();
        return Ok(half * alpha * total);
    }
    let mh = sym_of(&m.to_matrix().matmul(&p.h.to_matrix())?)?;
    let ms = sym_of(&m.to_matrix().matmul(&p.s.to_matrix())?)?;
    let x = SymMatrix::identity(p.dim()).scale(lit(2.0)).sub(&mh.scale(alpha))?;
    let x_inv = x.eigh()?.map_spectrum(|v| T::one() / v);
    Ok(half * alpha * x_inv.frobenius_inner(&ms)?)
}

/// Stationary `E[Δ]` of Polyak momentum:
/// `(α/2) (1+γ)/(1−γ) Tr((2(1+γ)I − αH)⁻¹ S)`.
pub fn limit_cycle_polyak<T: Scalar>(p: &QuadraticProblem<T>, alpha: T, gamma: T) -> Result<T> {
    let spec = MethodSpec::polyak(alpha, gamma)?;
    if commutator_norm(&p.h, &p.s)? >= lit(COMMUTE_TOL) {
        return Err(Error::Unsupported("H and S are not simultaneously diagonalizable".into()));
    }
    if !is_stable(p, &spec)? {
        return Err(Error::Divergence { step: 0 });
    }
    let one = T::one();
    let two_g = lit::<T>(2.0) * (one + gamma);
    let pref = lit::<T>(0.5) * alpha * (one + gamma) / (one - gamma);
    if p.is_diagonal() {
        let (h, s) = (p.h.diagonal(), p.s.diagonal());
        return Ok(pref * (0..p.dim()).map(|i| s[i] / (two_g - alpha * h[i])).sum::<T>());
    }
    let x = SymMatrix::identity(p.dim()).scale(two_g).sub(&p.h.scale(alpha))?;
    let x_inv = x.eigh()?.map_spectrum(|v| one / v);
    Ok(pref * x_inv.frobenius_inner(&p.s)?)
}

/// Stationary moments as the sum `Σ_k A^k Q (A^k)ᵀ` of the one-step map,
/// accumulated by repeated doubling. Requires a stable method.
pub fn stationary_moments<T: Scalar>(p: &QuadraticProblem<T>, m: &MethodSpec<T>) -> Result<MomentState<T>> {
    if !is_stable(p, m)? {
        return Err(Error::Divergence { step: 0 });
    }
    let d = p.dim();
    let (mut a, mut x) = match DenseMap::new(p, m)? {
        DenseMap::Preconditioned { a, noise } => (a, noise),
        DenseMap::Polyak { alpha, h, b, s, .. } => {
            let joint = Matrix::from_fn(2 * d, 2 * d, |i, j| match (i < d, j < d) {
                (true, true) => T::from_usize(usize::from(i == j)).unwrap(),
                (true, false) => {
                    if i == j - d {
                        -alpha
                    } else {
                        T::zero()
                    }
                }
                (false, true) => h.get(i - d, j),
                (false, false) => b.get(i - d, j - d),
            });
            let q = SymMatrix::from_fn(2 * d, |i, j| if i >= d && j >= d { s.get(i - d, j - d) } else { T::zero() });
            (joint, q)
        }
    };
    let eps = T::epsilon();
    for _ in 0..128 {
        let add = x.congruence(&a)?;
        let small = add.frobenius_norm() <= eps * x.frobenius_norm();
        x.add_scaled(&add, T::one())?;
        if small {
            break;
        }
        a = a.matmul(&a)?;
    }
    Ok(match m.method {
        Method::Polyak { .. } => {
            let sigma = SymMatrix::from_fn(d, |i, j| x.get(i, j));
            MomentState {
                t: usize::MAX,
                delta: vec![T::zero(); d],
                sigma,
                velocity: Some(VelocityMoments {
                    delta_v: vec![T::zero(); d],
                    sigma_theta_v: Matrix::from_fn(d, d, |i, j| x.get(i, j + d)),
                    sigma_vv: SymMatrix::from_fn(d, |i, j| x.get(i + d, j + d)),
                }),
            }
        }
        _ => MomentState { t: usize::MAX, delta: vec![T::zero(); d], sigma: x, velocity: None },
    })
}

/// Iterates [`step_moments`] from the zero state until the relative change of
/// `Σ` drops below `rel_tol`.
pub fn iterate_to_stationary<T: Scalar>(
    p: &QuadraticProblem<T>,
    m: &MethodSpec<T>,
    rel_tol: T,
    max_steps: usize,
) -> Result<MomentState<T>> {
    let map = DenseMap::new(p, m)?;
    let mut state = MomentState::initial(p, m, &p.theta_star)?;
    for step in 0..max_steps {
        let next = map.step(&state)?;
        let mut change = next.sigma.frobenius_dist_sq(&state.sigma)?;
        let mut size = next.sigma.frobenius_norm_sq();
        if let (Some(a), Some(b)) = (&next.velocity, &state.velocity) {
            change += a.sigma_vv.frobenius_dist_sq(&b.sigma_vv)?;
            size += a.sigma_vv.frobenius_norm_sq();
        }
        if !change.is_finite() {
            return Err(Error::Divergence { step });
        }
        let done = size > T::zero() && change.sqrt() <= rel_tol * size.sqrt();
        state = next;
        if done {
            return Ok(state);
        }
    }
    Err(Error::Numerical(format!("no stationary point within {max_steps} steps")))
}

/// Residual of `Σ H M + M H Σ = α M (S + H Σ H) M`, Frobenius norm.
pub fn lyapunov_residual<T: Scalar>(p: &QuadraticProblem<T>, alpha: T, m: &SymMatrix<T>, sigma: &SymMatrix<T>) -> Result<T> {
    let (hm, mm, sm) = (p.h.to_matrix(), m.to_matrix(), sigma.to_matrix());
    let lhs = sm.matmul(&hm)?.matmul(&mm)?.add(&mm.matmul(&hm)?.matmul(&sm)?)?;
    let mut inner = p.s.clone();
    inner.add_scaled(&sigma.congruence(&hm)?, T::one())?;
    let rhs = inner.congruence(&mm)?.scale(alpha);
    Ok(lhs.sub(&rhs.to_matrix())?.frobenius_norm())
}

/// Stationary suboptimality: closed form when the matrices commute, doubling otherwise.
pub fn stationary_subopt<T: Scalar>(p: &QuadraticProblem<T>, m: &MethodSpec<T>) -> Result<T> {
    let closed = match &m.method {
        Method::Polyak { gamma } => limit_cycle_polyak(p, m.alpha, *gamma),
        _ => limit_cycle_sg(p, m.alpha, &m.preconditioner(p.dim())),
    };
    match closed {
        Err(Error::Unsupported(_)) => expected_subopt(p, &stationary_moments(p, m)?),
        other => other,
    }
}

/// Per-coordinate moments for diagonal problems.
enum Diagonal<T> {
    Preconditioned { a2: Vec<T>, q: Vec<T>, sigma: Vec<T> },
    Polyak { alpha: T, b: Vec<T>, s: Vec<T>, st: Vec<T>, stv: Vec<T>, sv: Vec<T> },
}

impl<T: Scalar> Diagonal<T> {
    fn new(p: &QuadraticProblem<T>, m: &MethodSpec<T>, theta0: &[T]) -> Option<Self> {
        if !p.is_diagonal() {
            return None;
        }
        let h = p.h.diagonal();
        let s = p.s.diagonal();
        let e2: Vec<T> = theta0.iter().zip(&p.theta_star).map(|(&a, &b)| (a - b) * (a - b)).collect();
        let alpha = m.alpha;
        match &m.method {
            Method::Polyak { gamma } => Some(Diagonal::Polyak {
                alpha,
                b: h.iter().map(|&hi| *gamma - alpha * hi).collect(),
                s,
                st: e2,
                stv: vec![T::zero(); h.len()],
                sv: vec![T::zero(); h.len()],
            }),
            method => {
                let md = match method {
                    Method::Preconditioned(mm) if mm.is_diagonal() => mm.diagonal(),
                    Method::Preconditioned(_) => return None,
                    _ => vec![T::one(); h.len()],
                };
                Some(Diagonal::Preconditioned {
                    a2: (0..h.len()).map(|i| (T::one() - alpha * md[i] * h[i]).powi(2)).collect(),
                    q: (0..h.len()).map(|i| alpha * alpha * md[i] * md[i] * s[i]).collect(),
                    sigma: e2,
                })
            }
        }
    }

    fn step(&mut self, h: &[T]) {
        match self {
            Diagonal::Preconditioned { a2, q, sigma } => {
                for i in 0..sigma.len() {
                    sigma[i] = a2[i] * sigma[i] + q[i];
                }
            }
            Diagonal::Polyak { alpha, b, s, st, stv, sv } => {
                let a = *alpha;
                for i in 0..st.len() {
                    let (t0, tv0, v0) = (st[i], stv[i], sv[i]);
                    st[i] = t0 - lit::<T>(2.0) * a * tv0 + a * a * v0;
                    stv[i] = h[i] * t0 + b[i] * tv0 - a * h[i] * tv0 - a * b[i] * v0;
                    sv[i] = h[i] * h[i] * t0 + lit::<T>(2.0) * h[i] * b[i] * tv0 + b[i] * b[i] * v0 + s[i];
                }
            }
        }
    }

    fn subopt(&self, h: &[T]) -> T {
        let sig = match self {
            Diagonal::Preconditioned { sigma, .. } => sigma,
            Diagonal::Polyak { st, .. } => st,
        };
        lit::<T>(0.5) * h.iter().zip(sig).map(|(&a, &b)| a * b).sum::<T>()
    }
}

/// Moment propagation backend for one (problem, method, θ₀).
enum Propagator<'a, T: Scalar> {
    Diagonal { h: Vec<T>, state: Diagonal<T> },
    Dense { p: &'a QuadraticProblem<T>, map: DenseMap<T>, state: MomentState<T> },
}

/// Which backend [`subopt_curve_with`] and [`steps_to_threshold_with`] use.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Engine {
    /// Per-coordinate recursion when everything is diagonal, dense otherwise.
    #[default]
    Auto,
    Dense,
}

impl<'a, T: Scalar> Propagator<'a, T> {
    fn new(p: &'a QuadraticProblem<T>, m: &MethodSpec<T>, theta0: &[T], engine: Engine) -> Result<Self> {
        m.check_dims(p)?;
        let state = MomentState::initial(p, m, theta0)?;
        if engine == Engine::Auto {
            if let Some(diag) = Diagonal::new(p, m, theta0) {
                return Ok(Propagator::Diagonal { h: p.h.diagonal(), state: diag });
            }
        }
        Ok(Propagator::Dense { p, map: DenseMap::new(p, m)?, state })
    }

    fn subopt(&self) -> Result<T> {
        match self {
            Propagator::Diagonal { h, state } => Ok(state.subopt(h)),
            Propagator::Dense { p, state, .. } => expected_subopt(p, state),
        }
    }

    fn advance(&mut self) -> Result<()> {
        match self {
            Propagator::Diagonal { h, state } => state.step(h),
            Propagator::Dense { map, state, .. } => *state = map.step(state)?,
        }
        Ok(())
    }
}

/// `E[Δ_t]` for `t = 0..=steps`.
pub fn subopt_curve<T: Scalar>(p: &QuadraticProblem<T>, m: &MethodSpec<T>, theta0: &[T], steps: usize) -> Result<Vec<T>> {
    subopt_curve_with(p, m, theta0, steps, Engine::Auto)
}

pub fn subopt_curve_with<T: Scalar>(
    p: &QuadraticProblem<T>,
    m: &MethodSpec<T>,
    theta0: &[T],
    steps: usize,
    engine: Engine,
) -> Result<Vec<T>> {
    let mut prop = Propagator::new(p, m, theta0, engine)?;
    let mut out = Vec::with_capacity(steps + 1);
    out.push(prop.subopt()?);
    for _ in 0..steps {
        prop.advance()?;
        out.push(prop.subopt()?);
    }
    Ok(out)
}

/// Result of a threshold search.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "outcome", content = "steps", rename_all = "snake_case")]
pub enum StepOutcome {
    /// Smallest `t` with `E[Δ_t] ≤ ε`.
    Reached(usize),
    /// The stationary suboptimality is at least `ε`, so the threshold is never met.
    Never,
    /// The recursion is unstable for this stepsize.
    Diverged,
    /// Not reached within the step budget.
    Capped(usize),
}

impl StepOutcome {
    pub fn steps(&self) -> Option<usize> {
        match self {
            StepOutcome::Reached(t) => Some(*t),
            _ => None,
        }
    }
}

impl fmt::Display for StepOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StepOutcome::Reached(t) => write!(f, "{t}"),
            StepOutcome::Never => f.write_str("never"),
            StepOutcome::Diverged => f.write_str("diverged"),
            StepOutcome::Capped(c) => write!(f, ">{c}"),
        }
    }
}

/// Smallest `t` with `E[Δ_t] ≤ ε` under exact moment propagation.
pub fn steps_to_threshold<T: Scalar>(p: &QuadraticProblem<T>, m: &MethodSpec<T>, theta0: &[T], eps: T) -> Result<StepOutcome> {
    steps_to_threshold_with(p, m, theta0, eps, DEFAULT_STEP_CAP, Engine::Auto)
}

/// As [`steps_to_threshold`], giving up after `cap` steps.
pub fn steps_to_threshold_with<T: Scalar>(
    p: &QuadraticProblem<T>,
    m: &MethodSpec<T>,
    theta0: &[T],
    eps: T,
    cap: usize,
    engine: Engine,
) -> Result<StepOutcome> {
    if !(eps > T::zero()) {
        return Err(Error::invalid("threshold must be positive"));
    }
    let mut prop = Propagator::new(p, m, theta0, engine)?;
    if prop.subopt()? <= eps {
        return Ok(StepOutcome::Reached(0));
    }
    if !is_stable(p, m)? {
        return Ok(StepOutcome::Diverged);
    }
    if stationary_subopt(p, m)? >= eps {
        return Ok(StepOutcome::Never);
    }
    for t in 1..=cap {
        prop.advance()?;
        if prop.subopt()? <= eps {
            return Ok(StepOutcome::Reached(t));
        }
    }
    Ok(StepOutcome::Capped(cap))
}

/// Which family the stepsize search builds methods from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodKind {
    Sg,
    Newton,
    Polyak,
}

impl MethodKind {
    pub const ALL: [MethodKind; 3] = [MethodKind::Sg, MethodKind::Newton, MethodKind::Polyak];

    pub fn name(&self) -> &'static str {
        match self {
            MethodKind::Sg => "SG",
            MethodKind::Newton => "Newton",
            MethodKind::Polyak => "Polyak",
        }
    }

    pub fn build<T: Scalar>(&self, p: &QuadraticProblem<T>, alpha: T, gamma: T) -> Result<MethodSpec<T>> {
        match self {
            MethodKind::Sg => MethodSpec::sg(alpha),
            MethodKind::Newton => MethodSpec::newton(p, alpha),
            MethodKind::Polyak => MethodSpec::polyak(alpha, gamma),
        }
    }
}

/// Log-spaced stepsizes `10^(log10(lo) + k/per_decade)` strictly below `hi`,
/// followed by `hi` itself.
pub fn log_grid(lo: f64, hi: f64, per_decade: usize) -> Result<Vec<f64>> {
    if !(lo > 0.0 && hi > lo && hi.is_finite()) || per_decade == 0 {
        return Err(Error::invalid("log grid needs 0 < lo < hi and a positive density"));
    }
    let start = lo.log10() * per_decade as f64;
    let mut grid: Vec<f64> = (0..)
        .map(|k| 10f64.powf((start + k as f64) / per_decade as f64))
        .take_while(|&a| a < hi * (1.0 - 1e-12))
        .collect();
    grid.push(hi);
    Ok(grid)
}

/// Sixty points per decade from `1e-5` up to `2`.
pub fn default_alpha_grid() -> Vec<f64> {
    log_grid(1e-5, 2.0, 60).expect("valid default grid")
}

/// One evaluated grid point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub alpha: f64,
    pub gamma: Option<f64>,
    pub outcome: StepOutcome,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepsizeChoice {
    pub best_alpha: f64,
    pub best_gamma: Option<f64>,
    pub best_steps: usize,
    /// Every grid point in search order (decreasing α, then decreasing γ).
    /// Points that could not beat the running best are stopped early and
    /// show up as [`StepOutcome::Capped`].
    pub profile: Vec<GridPoint>,
}

/// Exhaustive grid search for the fewest steps to reach `eps`. Ties go to the
/// larger `α`, then the larger `γ`; `gamma_grid` is ignored except for Polyak.
pub fn optimize_stepsize<T: Scalar>(
    p: &QuadraticProblem<T>,
    kind: MethodKind,
    theta0: &[T],
    eps: T,
    alpha_grid: &[f64],
    gamma_grid: &[f64],
) -> Result<StepsizeChoice> {
    if alpha_grid.is_empty() || (kind == MethodKind::Polyak && gamma_grid.is_empty()) {
        return Err(Error::invalid("stepsize grids must be nonempty"));
    }
    let mut alphas = alpha_grid.to_vec();
    alphas.sort_by(|a, b| b.total_cmp(a));
    let mut gammas: Vec<Option<f64>> = match kind {
        MethodKind::Polyak => gamma_grid.iter().copied().map(Some).collect(),
        _ => vec![None],
    };
    gammas.sort_by(|a, b| b.unwrap_or(0.0).total_cmp(&a.unwrap_or(0.0)));

    let mut best: Option<(f64, Option<f64>, usize)> = None;
    let mut profile = Vec::with_capacity(alphas.len() * gammas.len());
    for &alpha in &alphas {
        for &gamma in &gammas {
            let method = kind.build(p, lit(alpha), lit(gamma.unwrap_or(0.0)))?;
            // only strictly fewer steps can displace the incumbent
            let cap = best.map_or(DEFAULT_STEP_CAP, |(_, _, b)| b.saturating_sub(1));
            let outcome = if best.is_some_and(|(_, _, b)| b == 0) {
                StepOutcome::Capped(0)
            } else {
                steps_to_threshold_with(p, &method, theta0, eps, cap, Engine::Auto)?
            };
            if let StepOutcome::Reached(t) = outcome {
                if best.is_none_or(|(_, _, b)| t < b) {
                    best = Some((alpha, gamma, t));
                }
            }
            profile.push(GridPoint { alpha, gamma, outcome });
        }
    }
    let (best_alpha, best_gamma, best_steps) = best.ok_or(Error::NoFeasibleStepsize)?;
    Ok(StepsizeChoice { best_alpha, best_gamma, best_steps, profile })
}

/// Empirical suboptimality curve over simulated trajectories.
#[derive(Clone, Debug, PartialEq)]
pub struct PathStats {
    /// Mean of `f(θ_t) − f(θ*)` for `t = 0..=steps`.
    pub mean: Vec<f64>,
    /// Standard error of that mean.
    pub stderr: Vec<f64>,
    pub paths: usize,
}

const PATH_CHUNK: usize = 64;

/// Simulates `paths` independent trajectories with Gaussian noise
/// `ε = L z`, `L Lᵀ = S`. Path `i` draws from stream `i` of a ChaCha8
/// generator seeded with `seed`; chunks are merged in index order.
pub fn simulate_paths<T: Scalar>(
    p: &QuadraticProblem<T>,
    m: &MethodSpec<T>,
    theta0: &[T],
    steps: usize,
    paths: usize,
    seed: u64,
) -> Result<PathStats> {
    m.check_dims(p)?;
    if theta0.len() != p.dim() {
        return Err(Error::dims("θ0 dimension mismatch"));
    }
    if paths == 0 {
        return Err(Error::invalid("need at least one path"));
    }
    let d = p.dim();
    let eig = p.s.eigh()?;
    let root: Vec<T> = eig.values.iter().map(|&v| v.max(T::zero()).sqrt()).collect();
    let noise_factor = Matrix::from_fn(d, d, |i, k| eig.vectors.get(i, k) * root[k]);
    let precond = m.preconditioner(d);

    // Welford accumulators per step, merged pairwise across chunks
    let run_chunk = |c: usize| -> Result<(f64, Vec<f64>, Vec<f64>)> {
        let mut count = 0.0;
        let mut mean = vec![0.0; steps + 1];
        let mut m2 = vec![0.0; steps + 1];
        for path in c * PATH_CHUNK..((c + 1) * PATH_CHUNK).min(paths) {
            count += 1.0;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(path as u64);
            let mut theta = theta0.to_vec();
            let mut v = vec![T::zero(); d];
            let mut record = |t: usize, theta: &[T]| -> Result<()> {
                let f = p.subopt(theta)?.to_f64_lossy();
                if !f.is_finite() {
                    return Err(Error::Divergence { step: t });
                }
                let d = f - mean[t];
                mean[t] += d / count;
                m2[t] += d * (f - mean[t]);
                Ok(())
            };
            record(0, &theta)?;
            for t in 1..=steps {
                let mut draw = || {
                    let z: Vec<T> = (0..d).map(|_| lit::<T>(StandardNormal.sample(&mut rng))).collect();
                    noise_factor.matvec(&z)
                };
                match &m.method {
                    Method::Polyak { gamma } => {
                        // θ_t = θ_{t−1} − α v_{t−1}, then v_t = γ v_{t−1} + g(θ_t)
                        for (th, &vi) in theta.iter_mut().zip(&v) {
                            *th -= m.alpha * vi;
                        }
                        let e: Vec<T> = theta.iter().zip(&p.theta_star).map(|(&a, &b)| a - b).collect();
                        let g = p.h.matvec(&e)?;
                        let eps = draw()?;
                        for i in 0..d {
                            v[i] = *gamma * v[i] + g[i] + eps[i];
                        }
                    }
                    _ => {
                        let e: Vec<T> = theta.iter().zip(&p.theta_star).map(|(&a, &b)| a - b).collect();
                        let mut g = p.h.matvec(&e)?;
                        for (gi, ei) in g.iter_mut().zip(draw()?) {
                            *gi += ei;
                        }
                        let step = precond.matvec(&g)?;
                        for (th, s) in theta.iter_mut().zip(step) {
                            *th -= m.alpha * s;
                        }
                    }
                }
                record(t, &theta)?;
            }
        }
        Ok((count, mean, m2))
    };

    let chunks: Vec<(f64, Vec<f64>, Vec<f64>)> =
        (0..paths.div_ceil(PATH_CHUNK)).into_par_iter().map(run_chunk).collect::<Result<_>>()?;
    let mut n = 0.0;
    let mut mean = vec![0.0; steps + 1];
    let mut m2 = vec![0.0; steps + 1];
    for (nb, mb, qb) in &chunks {
        let total = n + nb;
        for t in 0..=steps {
            let delta = mb[t] - mean[t];
            mean[t] += delta * nb / total;
            m2[t] += qb[t] + delta * delta * n * nb / total;
        }
        n = total;
    }
    let stderr = m2.iter().map(|&q| if paths < 2 { 0.0 } else { (q / (n - 1.0) / n).sqrt() }).collect();
    Ok(PathStats { mean, stderr, paths })
}

/// Outcome of checking the function-value bound
/// `E[Δ_k] ≤ (1 − 2αμ_Mμ)^k Δ₀ + α/(4μ_Mμ) Tr(H M S M)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Prop2Report {
    pub mu: f64,
    pub mu_m: f64,
    pub rate: f64,
    pub floor: f64,
    pub horizon: usize,
    /// Steps where the exact `E[Δ_k]` exceeds the bound by more than the tolerance.
    pub violations: usize,
    /// Largest `E[Δ_k] − bound_k` observed.
    pub max_excess: f64,
    pub mc: Option<McAgreement>,
}

/// Exact versus simulated `E[Δ_k]` at a set of checkpoints.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct McAgreement {
    pub checkpoints: Vec<usize>,
    /// `|simulated − exact| / stderr` at each checkpoint.
    pub z_scores: Vec<f64>,
    /// Checkpoints with a z-score above 3.
    pub exceedances: usize,
    /// Checkpoints where the simulated mean also exceeds the bound.
    pub mc_bound_violations: usize,
}

/// Tolerance on bound checks: `1e-12 · max(1, bound)`.
pub const PROP2_TOL: f64 = 1e-12;

/// Compares simulated and exact curves at `checkpoints`.
pub fn compare_with_paths(exact: &[f64], stats: &PathStats, checkpoints: &[usize]) -> McAgreement {
    let z_scores: Vec<f64> = checkpoints
        .iter()
        .map(|&k| {
            let diff = (stats.mean[k] - exact[k]).abs();
            if stats.stderr[k] > 0.0 {
                diff / stats.stderr[k]
            } else if diff <= 1e-12 * (1.0 + exact[k].abs()) {
                0.0
            } else {
                f64::INFINITY
            }
        })
        .collect();
    let exceedances = z_scores.iter().filter(|&&z| z > 3.0).count();
    McAgreement { checkpoints: checkpoints.to_vec(), z_scores, exceedances, mc_bound_violations: 0 }
}

/// Evaluates the bound at every `k ≤ horizon` using exact moments, and
/// optionally against `mc_paths` simulated trajectories at ten checkpoints.
pub fn check_prop2_bound<T: Scalar>(
    p: &QuadraticProblem<T>,
    m: &MethodSpec<T>,
    theta0: &[T],
    horizon: usize,
    mc_paths: usize,
    seed: u64,
) -> Result<Prop2Report> {
    if matches!(m.method, Method::Polyak { .. }) {
        return Err(Error::BoundInapplicable("the bound covers (preconditioned) stochastic gradient only".into()));
    }
    let d = p.dim();
    let mm = m.preconditioner(d);
    let mu = p.h.min_eigenvalue()?;
    let mhm = p.h.congruence(&mm.to_matrix())?;
    let mu_m = mm.sub(&mhm.scale(lit::<T>(0.5) * m.alpha))?.min_eigenvalue()?;
    if mu_m <= T::zero() {
        return Err(Error::BoundInapplicable(format!("μ_M = {mu_m} is not positive")));
    }
    let a_mu = m.alpha * mu_m * mu;
    if a_mu > lit(0.5) {
        return Err(Error::BoundInapplicable(format!("α μ_M μ = {a_mu} exceeds 1/2")));
    }
    let rate = T::one() - lit::<T>(2.0) * a_mu;
    let floor = m.alpha / (lit::<T>(4.0) * mu_m * mu) * p.s.congruence(&mm.to_matrix())?.frobenius_inner(&p.h)?;
    let exact: Vec<f64> = subopt_curve(p, m, theta0, horizon)?.into_iter().map(|v| v.to_f64_lossy()).collect();
    let (rate_f, floor_f) = (rate.to_f64_lossy(), floor.to_f64_lossy());
    let bound: Vec<f64> = (0..=horizon).map(|k| rate_f.powi(k as i32) * exact[0] + floor_f).collect();
    let mut violations = 0;
    let mut max_excess = f64::NEG_INFINITY;
    for (e, b) in exact.iter().zip(&bound) {
        let excess = e - b;
        max_excess = max_excess.max(excess);
        if excess > PROP2_TOL * b.max(1.0) {
            violations += 1;
        }
    }
    let mc = if mc_paths > 0 {
        let stats = simulate_paths(p, m, theta0, horizon, mc_paths, seed)?;
        let checkpoints = checkpoints(horizon, 10);
        let mut agreement = compare_with_paths(&exact, &stats, &checkpoints);
        agreement.mc_bound_violations = checkpoints.iter().filter(|&&k| stats.mean[k] > bound[k]).count();
        Some(agreement)
    } else {
        None
    };
    Ok(Prop2Report {
        mu: mu.to_f64_lossy(),
        mu_m: mu_m.to_f64_lossy(),
        rate: rate_f,
        floor: floor_f,
        horizon,
        violations,
        max_excess,
        mc,
    })
}

/// `count` roughly evenly spaced steps in `1..=horizon` (fewer if `horizon < count`).
pub fn checkpoints(horizon: usize, count: usize) -> Vec<usize> {
    let mut out: Vec<usize> = (1..=count).map(|i| (i * horizon).div_ceil(count).max(1)).collect();
    out.dedup();
    out.retain(|&k| k <= horizon && k >= 1);
    out
}

/// Closed form versus iterated recursion for one random configuration.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LimitCycleCheck {
    pub case: usize,
    pub dim: usize,
    pub method: &'static str,
    pub alpha: f64,
    pub gamma: Option<f64>,
    pub closed_form: f64,
    pub iterated: f64,
    pub abs_diff: f64,
    /// Frobenius residual of the Lyapunov equation at the iterated `Σ`
    /// (non-momentum methods only).
    pub lyapunov_residual: Option<f64>,
    pub iterations: usize,
}

/// Random orthogonal matrix from the eigenvectors of a random symmetric one.
fn random_rotation(d: usize, rng: &mut impl rand::Rng) -> Result<Matrix<f64>> {
    let a = SymMatrix::from_fn(d, |_, _| rng.random_range(-1.0..1.0));
    Ok(a.eigh()?.vectors)
}

/// `cases` random commuting `(H, S, M)` triples of dimension 1–6 sharing a
/// random eigenbasis; case `i` uses stream `i` and cycles through SG,
/// preconditioned SG and Polyak momentum at a random stable stepsize.
pub fn limit_cycle_sweep(cases: usize, seed: u64) -> Result<Vec<LimitCycleCheck>> {
    use rand::Rng;
    (0..cases)
        .map(|case| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(case as u64);
            let d = rng.random_range(1..=6usize);
            let q = random_rotation(d, &mut rng)?;
            let mut spectrum = |lo: f64, hi: f64| -> Result<SymMatrix<f64>> {
                let v: Vec<f64> = (0..d).map(|_| rng.random_range(lo..hi)).collect();
                SymMatrix::diag(&v).congruence(&q)
            };
            let h = spectrum(0.5, 5.0)?;
            let s = spectrum(0.0, 2.0)?;
            let m = spectrum(0.2, 2.0)?;
            let p = QuadraticProblem::new(h, vec![0.0; d], s)?;
            let u = rng.random_range(0.1..0.9);
            let (method, spec, closed) = match case % 3 {
                0 => {
                    let alpha = u * 2.0 / p.h.max_eigenvalue()?;
                    ("sg", MethodSpec::sg(alpha)?, limit_cycle_sg(&p, alpha, &SymMatrix::identity(d))?)
                }
                1 => {
                    let top = preconditioned_curvatures(&p, &m)?.into_iter().fold(0.0, f64::max);
                    let alpha = u * 2.0 / top;
                    ("preconditioned", MethodSpec::preconditioned(m.clone(), alpha)?, limit_cycle_sg(&p, alpha, &m)?)
                }
                _ => {
                    let gamma = rng.random_range(0.0..0.9);
                    let alpha = u * 2.0 * (1.0 + gamma) / p.h.max_eigenvalue()?;
                    ("polyak", MethodSpec::polyak(alpha, gamma)?, limit_cycle_polyak(&p, alpha, gamma)?)
                }
            };
            let fixed = iterate_to_stationary(&p, &spec, 1e-15, 10_000_000)?;
            let iterated = expected_subopt(&p, &fixed)?;
            let lyapunov_residual = match spec.method {
                Method::Polyak { .. } => None,
                _ => Some(lyapunov_residual(&p, spec.alpha, &spec.preconditioner(d), &fixed.sigma)?),
            };
            Ok(LimitCycleCheck {
                case,
                dim: d,
                method,
                alpha: spec.alpha,
                gamma: spec.gamma(),
                closed_form: closed,
                iterated,
                abs_diff: (closed - iterated).abs(),
                lyapunov_residual,
                iterations: fixed.t,
            })
        })
        .collect()
}

/// Simulated versus exact suboptimality for one random configuration.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct McCheck {
    pub case: usize,
    pub dim: usize,
    pub method: &'static str,
    pub alpha: f64,
    pub gamma: Option<f64>,
    pub agreement: McAgreement,
    /// Exact-moment violations of the function-value bound; `None` where
    /// its preconditions fail or the method has momentum.
    pub bound_violations: Option<usize>,
}

/// `cases` random configurations of dimension 1–4 with rotated `H`, a
/// generic PSD `S`, random start points and stepsizes, cycling through SG,
/// preconditioned SG and Polyak momentum. Each is simulated with `paths`
/// trajectories over `horizon` steps and compared at ten checkpoints.
pub fn mc_sweep(cases: usize, paths: usize, horizon: usize, seed: u64) -> Result<Vec<McCheck>> {
    use rand::Rng;
    (0..cases)
        .map(|case| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(case as u64);
            let d = rng.random_range(1..=4usize);
            let q = random_rotation(d, &mut rng)?;
            let hv: Vec<f64> = (0..d).map(|_| rng.random_range(0.5..4.0)).collect();
            let h = SymMatrix::diag(&hv).congruence(&q)?;
            let factor = Matrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
            let s = SymMatrix::identity(d).congruence(&factor)?;
            let theta0: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
            let p = QuadraticProblem::new(h, vec![0.0; d], s)?;
            let u = rng.random_range(0.05..0.5);
            let (method, spec) = match case % 3 {
                0 => ("sg", MethodSpec::sg(u * 2.0 / p.h.max_eigenvalue()?)?),
                1 => {
                    let mv: Vec<f64> = (0..d).map(|_| rng.random_range(0.3..2.0)).collect();
                    let m = SymMatrix::diag(&mv).congruence(&random_rotation(d, &mut rng)?)?;
                    let top = preconditioned_curvatures(&p, &m)?.into_iter().fold(0.0, f64::max);
                    ("preconditioned", MethodSpec::preconditioned(m, u * 2.0 / top)?)
                }
                _ => {
                    let gamma = rng.random_range(0.0..0.9);
                    ("polyak", MethodSpec::polyak(u * 2.0 * (1.0 + gamma) / p.h.max_eigenvalue()?, gamma)?)
                }
            };
            let exact: Vec<f64> = subopt_curve(&p, &spec, &theta0, horizon)?;
            let stats = simulate_paths(&p, &spec, &theta0, horizon, paths, rng.random())?;
            let agreement = compare_with_paths(&exact, &stats, &checkpoints(horizon, 10));
            let bound_violations = match check_prop2_bound(&p, &spec, &theta0, horizon, 0, 0) {
                Ok(r) => Some(r.violations),
                Err(Error::BoundInapplicable(_)) => None,
                Err(e) => return Err(e),
            };
            Ok(McCheck { case, dim: d, method, alpha: spec.alpha, gamma: spec.gamma(), agreement, bound_violations })
        })
        .collect()
}
