//! Small analytic model families with exact per-sample derivatives.
//!
//! Every family is a negative log-likelihood `ℓ(θ, x, y) = −log q_θ(y|x)`.
//! Parameters are flat vectors; each family documents its packing order.

use std::io::{Read, Write};

use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::SymMatrix;
use crate::scalar::Scalar;

/// Relative step for finite-difference Hessians: `h_i = FD_REL_STEP · (1 + |θ_i|)`.
pub const FD_REL_STEP: f64 = 1e-4;

/// Model family and its shape metadata.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Family {
    /// `q_θ(x) = N(x; θ, I)`; unconditional, θ has the dimension of x.
    GaussianMean { dim: usize },
    /// `q_θ(y|x) = N(y; W x, I)` with `W` of shape `outputs × inputs`, packed row-major.
    Ols { inputs: usize, outputs: usize },
    /// Softmax over `W x + b`; packing: `W` (`classes × inputs`, row-major) then `b`.
    SoftmaxLinear { inputs: usize, classes: usize },
    /// Softmax over `W2 tanh(W1 x + b1) + b2`; packing: `W1`, `b1`, `W2`, `b2`, matrices row-major.
    SoftmaxMlp1 { inputs: usize, hidden: usize, classes: usize },
}

impl Family {
    pub fn param_dim(&self) -> usize {
        match *self {
            Family::GaussianMean { dim } => dim,
            Family::Ols { inputs, outputs } => inputs * outputs,
            Family::SoftmaxLinear { inputs, classes } => (inputs + 1) * classes,
            Family::SoftmaxMlp1 { inputs, hidden, classes } => hidden * (inputs + 1) + classes * (hidden + 1),
        }
    }

    pub fn input_dim(&self) -> usize {
        match *self {
            Family::GaussianMean { dim } => dim,
            Family::Ols { inputs, .. } | Family::SoftmaxLinear { inputs, .. } | Family::SoftmaxMlp1 { inputs, .. } => {
                inputs
            }
        }
    }

    pub fn classes(&self) -> Option<usize> {
        match *self {
            Family::SoftmaxLinear { classes, .. } | Family::SoftmaxMlp1 { classes, .. } => Some(classes),
            _ => None,
        }
    }

    pub fn is_classification(&self) -> bool {
        self.classes().is_some()
    }

    /// True when the per-sample Hessian does not depend on the label.
    pub fn hessian_label_free(&self) -> bool {
        !matches!(self, Family::SoftmaxMlp1 { .. })
    }

    fn validate(&self) -> Result<()> {
        match *self {
            Family::GaussianMean { dim: 0 } => Err(Error::invalid("GaussianMean needs dim >= 1")),
            Family::Ols { outputs, inputs } if outputs == 0 || inputs == 0 => {
                Err(Error::invalid("OLS needs at least one input and one output"))
            }
            Family::SoftmaxLinear { classes, .. } | Family::SoftmaxMlp1 { classes, .. } if classes < 2 => {
                Err(Error::invalid("softmax families need at least two classes"))
            }
            _ => Ok(()),
        }
    }
}

/// Target attached to one sample.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Target<T> {
    Class(usize),
    Real(Vec<T>),
    /// Unconditional families carry no target.
    Unlabeled,
}

/// Loss, parameter gradient, parameter Hessian and input gradient at one sample.
#[derive(Clone, Debug)]
pub struct PerSampleDerivatives<T: Scalar> {
    pub loss: T,
    pub grad: Vec<T>,
    pub hess: SymMatrix<T>,
    pub input_grad: Vec<T>,
}

/// Loss and first derivatives only.
#[derive(Clone, Debug)]
pub struct FirstOrder<T> {
    pub loss: T,
    pub grad: Vec<T>,
    pub input_grad: Vec<T>,
}

/// A model family together with a parameter point.
#[derive(Clone, Debug, PartialEq)]
pub struct LossOracle<T> {
    family: Family,
    theta: Vec<T>,
}

fn ln_2pi<T: Scalar>() -> T {
    T::lit((2.0 * std::f64::consts::PI).ln())
}

fn softmax<T: Scalar>(logits: &[T]) -> Vec<T> {
    let m = logits.iter().fold(T::neg_infinity(), |a, &b| a.max(b));
    let exps: Vec<T> = logits.iter().map(|&z| (z - m).exp()).collect();
    let total: T = exps.iter().copied().sum();
    exps.into_iter().map(|e| e / total).collect()
}

fn log_sum_exp<T: Scalar>(logits: &[T]) -> T {
    let m = logits.iter().fold(T::neg_infinity(), |a, &b| a.max(b));
    m + logits.iter().map(|&z| (z - m).exp()).sum::<T>().ln()
}

fn check_finite<T: Scalar>(what: &str, values: &[T]) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Numerical(format!("non-finite {what}")))
    }
}

impl<T: Scalar> LossOracle<T> {
    pub fn new(family: Family, theta: Vec<T>) -> Result<Self> {
        family.validate()?;
        if theta.len() != family.param_dim() {
            return Err(Error::dims(format!(
                "{family:?} expects {} parameters, got {}",
                family.param_dim(),
                theta.len()
            )));
        }
        Ok(Self { family, theta })
    }

    pub fn zeros(family: Family) -> Result<Self> {
        Self::new(family, vec![T::zero(); family.param_dim()])
    }

    /// Parameters drawn i.i.d. from `N(0, scale²)`.
    pub fn random(family: Family, scale: f64, rng: &mut impl Rng) -> Result<Self> {
        let theta = (0..family.param_dim())
            .map(|_| {
                let z: f64 = StandardNormal.sample(rng);
                T::lit(scale * z)
            })
            .collect();
        Self::new(family, theta)
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn theta(&self) -> &[T] {
        &self.theta
    }

    pub fn param_dim(&self) -> usize {
        self.theta.len()
    }

    pub fn with_theta(&self, theta: Vec<T>) -> Result<Self> {
        Self::new(self.family, theta)
    }

    fn check_input(&self, x: &[T]) -> Result<()> {
        if x.len() != self.family.input_dim() {
            return Err(Error::dims(format!(
                "input has length {}, family expects {}",
                x.len(),
                self.family.input_dim()
            )));
        }
        Ok(())
    }

    fn class_of(&self, y: &Target<T>) -> Result<usize> {
        let k = self.family.classes().expect("classification family");
        match y {
            Target::Class(c) if *c < k => Ok(*c),
            Target::Class(c) => Err(Error::invalid(format!("label {c} outside 0..{k}"))),
            other => Err(Error::invalid(format!("classification family got target {other:?}"))),
        }
    }

    /// Logits of a classification family.
    pub fn logits(&self, x: &[T]) -> Result<Vec<T>> {
        self.check_input(x)?;
        match self.family {
            Family::SoftmaxLinear { inputs, classes } => {
                let (w, b) = self.theta.split_at(classes * inputs);
                Ok((0..classes)
                    .map(|c| b[c] + w[c * inputs..(c + 1) * inputs].iter().zip(x).map(|(&a, &v)| a * v).sum::<T>())
                    .collect())
            }
            Family::SoftmaxMlp1 { .. } => Ok(self.mlp_forward(x).1),
            _ => Err(Error::Unsupported(format!("{:?} has no logits", self.family))),
        }
    }

    fn mlp_parts(&self) -> (&[T], &[T], &[T], &[T]) {
        let Family::SoftmaxMlp1 { inputs, hidden, classes } = self.family else {
            unreachable!("mlp_parts on a non-MLP family")
        };
        let (w1, rest) = self.theta.split_at(hidden * inputs);
        let (b1, rest) = rest.split_at(hidden);
        let (w2, b2) = rest.split_at(classes * hidden);
        (w1, b1, w2, b2)
    }

    /// Hidden activations and logits.
    fn mlp_forward(&self, x: &[T]) -> (Vec<T>, Vec<T>) {
        let Family::SoftmaxMlp1 { inputs, hidden, classes } = self.family else {
            unreachable!()
        };
        let (w1, b1, w2, b2) = self.mlp_parts();
        let act: Vec<T> = (0..hidden)
            .map(|j| (b1[j] + w1[j * inputs..(j + 1) * inputs].iter().zip(x).map(|(&a, &v)| a * v).sum::<T>()).tanh())
            .collect();
        let logits = (0..classes)
            .map(|c| b2[c] + w2[c * hidden..(c + 1) * hidden].iter().zip(&act).map(|(&a, &v)| a * v).sum::<T>())
            .collect();
        (act, logits)
    }

    /// Loss, parameter gradient and input gradient.
    pub fn first_order(&self, x: &[T], y: &Target<T>) -> Result<FirstOrder<T>> {
        self.check_input(x)?;
        let out = match self.family {
            Family::GaussianMean { .. } => {
                if !matches!(y, Target::Unlabeled) {
                    return Err(Error::invalid("GaussianMean samples carry no target"));
                }
                let diff: Vec<T> = x.iter().zip(&self.theta).map(|(&xi, &ti)| xi - ti).collect();
                let d = T::from_usize(diff.len()).unwrap();
                let loss = T::lit(0.5) * (diff.iter().map(|&v| v * v).sum::<T>() + d * ln_2pi::<T>());
                FirstOrder { loss, grad: diff.iter().map(|&v| -v).collect(), input_grad: diff }
            }
            Family::Ols { inputs, outputs } => {
                let Target::Real(yv) = y else {
                    return Err(Error::invalid("OLS needs a real-vector target"));
                };
                if yv.len() != outputs {
                    return Err(Error::invalid(format!("OLS target has length {}, expected {outputs}", yv.len())));
                }
                let w = &self.theta;
                let resid: Vec<T> = (0..outputs)
                    .map(|j| yv[j] - w[j * inputs..(j + 1) * inputs].iter().zip(x).map(|(&a, &v)| a * v).sum::<T>())
                    .collect();
                let p = T::from_usize(outputs).unwrap();
                let loss = T::lit(0.5) * (resid.iter().map(|&r| r * r).sum::<T>() + p * ln_2pi::<T>());
                let mut grad = Vec::with_capacity(outputs * inputs);
                for &r in &resid {
                    grad.extend(x.iter().map(|&xk| -r * xk));
                }
                let input_grad = (0..inputs).map(|k| -(0..outputs).map(|j| w[j * inputs + k] * resid[j]).sum::<T>()).collect();
                FirstOrder { loss, grad, input_grad }
            }
            Family::SoftmaxLinear { inputs, classes } => {
                let c = self.class_of(y)?;
                let logits = self.logits(x)?;
                let probs = softmax(&logits);
                let loss = log_sum_exp(&logits) - logits[c];
                let mut gz = probs;
                gz[c] -= T::one();
                let mut grad = Vec::with_capacity(self.theta.len());
                for &g in &gz {
                    grad.extend(x.iter().map(|&xk| g * xk));
                }
                grad.extend_from_slice(&gz);
                let w = &self.theta;
                let input_grad = (0..inputs).map(|k| (0..classes).map(|cc| w[cc * inputs + k] * gz[cc]).sum()).collect();
                FirstOrder { loss, grad, input_grad }
            }
            Family::SoftmaxMlp1 { inputs, hidden, classes } => {
                let c = self.class_of(y)?;
                let (act, logits) = self.mlp_forward(x);
                let loss = log_sum_exp(&logits) - logits[c];
                let mut gz = softmax(&logits);
                gz[c] -= T::one();
                let (w1, _, w2, _) = self.mlp_parts();
                let gu: Vec<T> = (0..hidden)
                    .map(|j| {
                        let ga: T = (0..classes).map(|cc| w2[cc * hidden + j] * gz[cc]).sum();
                        ga * (T::one() - act[j] * act[j])
                    })
                    .collect();
                let mut grad = Vec::with_capacity(self.theta.len());
                for &g in &gu {
                    grad.extend(x.iter().map(|&xk| g * xk));
                }
                grad.extend_from_slice(&gu);
                for &g in &gz {
                    grad.extend(act.iter().map(|&a| g * a));
                }
                grad.extend_from_slice(&gz);
                let input_grad = (0..inputs).map(|k| (0..hidden).map(|j| w1[j * inputs + k] * gu[j]).sum()).collect();
                FirstOrder { loss, grad, input_grad }
            }
        };
        check_finite("loss", &[out.loss])?;
        check_finite("gradient", &out.grad)?;
        check_finite("input gradient", &out.input_grad)?;
        Ok(out)
    }

    pub fn loss(&self, x: &[T], y: &Target<T>) -> Result<T> {
        Ok(self.first_order(x, y)?.loss)
    }

    /// Per-sample Hessian with respect to θ.
    pub fn hessian(&self, x: &[T], y: &Target<T>) -> Result<SymMatrix<T>> {
        self.check_input(x)?;
        let hess = match self.family {
            Family::GaussianMean { dim } => {
                if !matches!(y, Target::Unlabeled) {
                    return Err(Error::invalid("GaussianMean samples carry no target"));
                }
                SymMatrix::identity(dim)
            }
            Family::Ols { inputs, outputs } => {
                if !matches!(y, Target::Real(v) if v.len() == outputs) {
                    return Err(Error::invalid("OLS needs a real-vector target of the output dimension"));
                }
                SymMatrix::from_fn(inputs * outputs, |a, b| {
                    let (ja, ka) = (a / inputs, a % inputs);
                    let (jb, kb) = (b / inputs, b % inputs);
                    if ja == jb {
                        x[ka] * x[kb]
                    } else {
                        T::zero()
                    }
                })
            }
            Family::SoftmaxLinear { inputs, classes } => {
                self.class_of(y)?;
                let probs = softmax(&self.logits(x)?);
                // parameter index -> (class, feature value); biases use feature 1
                let split = classes * inputs;
                let coord = |a: usize| -> (usize, T) {
                    if a < split {
                        (a / inputs, x[a % inputs])
                    } else {
                        (a - split, T::one())
                    }
                };
                SymMatrix::from_fn(self.theta.len(), |a, b| {
                    let (ca, fa) = coord(a);
                    let (cb, fb) = coord(b);
                    let hz = if ca == cb { probs[ca] - probs[ca] * probs[cb] } else { -probs[ca] * probs[cb] };
                    hz * (fa * fb)
                })
            }
            Family::SoftmaxMlp1 { .. } => self.finite_difference_hessian(x, y)?,
        };
        check_finite("Hessian", hess.as_slice())?;
        Ok(hess)
    }

    /// Central differences of the analytic gradient, symmetrized.
    pub fn finite_difference_hessian(&self, x: &[T], y: &Target<T>) -> Result<SymMatrix<T>> {
        let d = self.theta.len();
        let mut cols = vec![T::zero(); d * d];
        let mut probe = self.clone();
        for i in 0..d {
            let base = self.theta[i];
            let h = T::lit(FD_REL_STEP) * (T::one() + base.abs());
            probe.theta[i] = base + h;
            let gp = probe.first_order(x, y)?.grad;
            probe.theta[i] = base - h;
            let gm = probe.first_order(x, y)?.grad;
            probe.theta[i] = base;
            let two_h = h + h;
            for j in 0..d {
                // column i of the Hessian
                cols[j * d + i] = (gp[j] - gm[j]) / two_h;
            }
        }
        let half = T::lit(0.5);
        Ok(SymMatrix::from_fn(d, |i, j| (cols[i * d + j] + cols[j * d + i]) * half))
    }

    pub fn eval(&self, x: &[T], y: &Target<T>) -> Result<PerSampleDerivatives<T>> {
        let fo = self.first_order(x, y)?;
        let hess = self.hessian(x, y)?;
        Ok(PerSampleDerivatives { loss: fo.loss, grad: fo.grad, hess, input_grad: fo.input_grad })
    }

    /// Exact `q_θ(·|x)` for classification families.
    pub fn label_distribution(&self, x: &[T]) -> Result<Vec<T>> {
        if !self.family.is_classification() {
            return Err(Error::Unsupported(format!("{:?} has no finite label distribution", self.family)));
        }
        Ok(softmax(&self.logits(x)?))
    }

    /// Draws a target from `q_θ(y|x)`.
    pub fn sample_label(&self, x: &[T], rng: &mut impl Rng) -> Result<Target<T>> {
        match self.family {
            Family::SoftmaxLinear { .. } | Family::SoftmaxMlp1 { .. } => {
                let probs = self.label_distribution(x)?;
                let u = T::lit(rng.random::<f64>());
                let mut acc = T::zero();
                for (c, &p) in probs.iter().enumerate() {
                    acc += p;
                    if u < acc {
                        return Ok(Target::Class(c));
                    }
                }
                Ok(Target::Class(probs.len() - 1))
            }
            Family::Ols { inputs, outputs } => {
                self.check_input(x)?;
                let w = &self.theta;
                Ok(Target::Real(
                    (0..outputs)
                        .map(|j| {
                            let mean: T = w[j * inputs..(j + 1) * inputs].iter().zip(x).map(|(&a, &v)| a * v).sum();
                            let z: f64 = StandardNormal.sample(rng);
                            mean + T::lit(z)
                        })
                        .collect(),
                ))
            }
            Family::GaussianMean { .. } => {
                Err(Error::Unsupported("GaussianMean is unconditional; it has no label distribution".into()))
            }
        }
    }

    /// Mean loss over a dataset.
    pub fn mean_loss(&self, data: &Dataset<T>) -> Result<T> {
        let mut total = T::zero();
        for (x, y) in data.iter() {
            total += self.loss(x, y)?;
        }
        Ok(total / T::from_usize(data.len()).unwrap())
    }

    /// Mean gradient over a dataset.
    pub fn mean_gradient(&self, data: &Dataset<T>) -> Result<Vec<T>> {
        let mut g = vec![T::zero(); self.param_dim()];
        for (x, y) in data.iter() {
            for (a, b) in g.iter_mut().zip(self.first_order(x, y)?.grad) {
                *a += b;
            }
        }
        let n = T::from_usize(data.len()).unwrap();
        Ok(g.into_iter().map(|v| v / n).collect())
    }
}

/// Samples `(x_n, y_n)`, `n = 1..N`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset<T> {
    inputs: Vec<Vec<T>>,
    targets: Vec<Target<T>>,
}

/// Which kind of target a CSV file carries.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TargetKind {
    Class,
    Real,
    Unlabeled,
}

impl<T: Scalar> Dataset<T> {
    pub fn new(inputs: Vec<Vec<T>>, targets: Vec<Target<T>>) -> Result<Self> {
        if inputs.is_empty() {
            return Err(Error::invalid("dataset must contain at least one sample"));
        }
        if inputs.len() != targets.len() {
            return Err(Error::dims(format!("{} inputs but {} targets", inputs.len(), targets.len())));
        }
        let d = inputs[0].len();
        if inputs.iter().any(|x| x.len() != d) {
            return Err(Error::dims("all inputs must share one dimension"));
        }
        let kind = std::mem::discriminant(&targets[0]);
        if targets.iter().any(|t| std::mem::discriminant(t) != kind) {
            return Err(Error::invalid("targets must all be of one kind"));
        }
        if let Target::Real(v) = &targets[0] {
            let p = v.len();
            if targets.iter().any(|t| matches!(t, Target::Real(w) if w.len() != p)) {
                return Err(Error::dims("real targets must share one dimension"));
            }
        }
        Ok(Self { inputs, targets })
    }

    pub fn unlabeled(inputs: Vec<Vec<T>>) -> Result<Self> {
        let n = inputs.len();
        Self::new(inputs, vec![Target::Unlabeled; n])
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.inputs[0].len()
    }

    pub fn inputs(&self) -> &[Vec<T>] {
        &self.inputs
    }

    pub fn targets(&self) -> &[Target<T>] {
        &self.targets
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[T], &Target<T>)> {
        self.inputs.iter().map(Vec::as_slice).zip(&self.targets)
    }

    pub fn target_kind(&self) -> TargetKind {
        match self.targets[0] {
            Target::Class(_) => TargetKind::Class,
            Target::Real(_) => TargetKind::Real,
            Target::Unlabeled => TargetKind::Unlabeled,
        }
    }

    /// Checks that every sample is valid input for `family`.
    pub fn check_compatible(&self, family: Family) -> Result<()> {
        if self.input_dim() != family.input_dim() {
            return Err(Error::dims(format!(
                "dataset inputs have dimension {}, {family:?} expects {}",
                self.input_dim(),
                family.input_dim()
            )));
        }
        match (family, self.target_kind()) {
            (Family::GaussianMean { .. }, TargetKind::Unlabeled) => Ok(()),
            (Family::Ols { outputs, .. }, TargetKind::Real) => match &self.targets[0] {
                Target::Real(v) if v.len() == outputs => Ok(()),
                _ => Err(Error::dims("OLS target dimension mismatch")),
            },
            (Family::SoftmaxLinear { classes, .. } | Family::SoftmaxMlp1 { classes, .. }, TargetKind::Class) => {
                match self.targets.iter().find(|t| matches!(t, Target::Class(c) if *c >= classes)) {
                    Some(t) => Err(Error::invalid(format!("label {t:?} outside 0..{classes}"))),
                    None => Ok(()),
                }
            }
            (f, k) => Err(Error::invalid(format!("{f:?} cannot use {k:?} targets"))),
        }
    }

    pub fn subset(&self, idx: &[usize]) -> Self {
        Self {
            inputs: idx.iter().map(|&i| self.inputs[i].clone()).collect(),
            targets: idx.iter().map(|&i| self.targets[i].clone()).collect(),
        }
    }

    /// Writes the CSV form: header `x_0,..,x_{d-1}` followed by `y` (class or
    /// scalar target), `y_0,..,y_{p-1}` (vector target) or nothing (unlabeled).
    pub fn write_csv(&self, out: impl Write) -> Result<()> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
        let d = self.input_dim();
        let mut header: Vec<String> = (0..d).map(|i| format!("x_{i}")).collect();
        match &self.targets[0] {
            Target::Class(_) => header.push("y".into()),
            Target::Real(v) if v.len() == 1 => header.push("y".into()),
            Target::Real(v) => header.extend((0..v.len()).map(|j| format!("y_{j}"))),
            Target::Unlabeled => {}
        }
        w.write_record(&header)?;
        for (x, y) in self.iter() {
            let mut row: Vec<String> = x.iter().map(|v| v.to_f64_lossy().to_string()).collect();
            match y {
                Target::Class(c) => row.push(c.to_string()),
                Target::Real(v) => row.extend(v.iter().map(|t| t.to_f64_lossy().to_string())),
                Target::Unlabeled => {}
            }
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(input: impl Read, kind: TargetKind) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let header = r.headers()?.clone();
        let d = header.iter().filter(|h| h.starts_with("x_")).count();
        let p = header.len() - d;
        if header.iter().take(d).enumerate().any(|(i, h)| h != format!("x_{i}")) {
            return Err(Error::invalid("CSV header must start with x_0..x_{d-1}"));
        }
        match kind {
            TargetKind::Class if p != 1 => return Err(Error::invalid("class CSV needs exactly one y column")),
            TargetKind::Unlabeled if p != 0 => return Err(Error::invalid("unlabeled CSV must not have y columns")),
            TargetKind::Real if p == 0 => return Err(Error::invalid("real-target CSV needs y columns")),
            _ => {}
        }
        let parse = |s: &str| -> Result<T> {
            s.trim()
                .parse::<f64>()
                .map(T::lit)
                .map_err(|e| Error::invalid(format!("bad number {s:?}: {e}")))
        };
        let (mut inputs, mut targets) = (Vec::new(), Vec::new());
        for rec in r.records() {
            let rec = rec?;
            let x = rec.iter().take(d).map(parse).collect::<Result<Vec<_>>>()?;
            let y = match kind {
                TargetKind::Class => Target::Class(
                    rec[d].trim().parse().map_err(|e| Error::invalid(format!("bad label {:?}: {e}", &rec[d])))?,
                ),
                TargetKind::Real => Target::Real(rec.iter().skip(d).map(parse).collect::<Result<Vec<_>>>()?),
                TargetKind::Unlabeled => Target::Unlabeled,
            };
            inputs.push(x);
            targets.push(y);
        }
        Self::new(inputs, targets)
    }
}

/// K-class Gaussian mixture with optional label randomization.
///
/// Class means are fixed by `distribution_seed`, so independent draws from
/// [`MixtureSpec::sample`] share one underlying distribution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixtureSpec {
    pub inputs: usize,
    pub classes: usize,
    /// Distance of each class mean from the origin.
    pub separation: f64,
    /// Probability that a label is replaced by a uniformly drawn class.
    pub corruption: f64,
    pub distribution_seed: u64,
}

impl MixtureSpec {
    pub fn class_means(&self) -> Vec<Vec<f64>> {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(self.distribution_seed);
        (0..self.classes)
            .map(|_| {
                let v: Vec<f64> = (0..self.inputs).map(|_| StandardNormal.sample(&mut rng)).collect();
                let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
                v.into_iter().map(|a| self.separation * a / norm).collect()
            })
            .collect()
    }

    pub fn sample<T: Scalar>(&self, n: usize, rng: &mut impl Rng) -> Result<Dataset<T>> {
        if self.classes < 2 || self.inputs == 0 {
            return Err(Error::invalid("mixture needs >= 2 classes and >= 1 input dimension"));
        }
        if !(0.0..=1.0).contains(&self.corruption) {
            return Err(Error::invalid("corruption ratio must lie in [0, 1]"));
        }
        let means = self.class_means();
        let (mut inputs, mut targets) = (Vec::with_capacity(n), Vec::with_capacity(n));
        for _ in 0..n {
            let c = rng.random_range(0..self.classes);
            let x = means[c]
                .iter()
                .map(|&m| {
                    let z: f64 = StandardNormal.sample(rng);
                    T::lit(m + z)
                })
                .collect();
            let label = if rng.random::<f64>() < self.corruption { rng.random_range(0..self.classes) } else { c };
            inputs.push(x);
            targets.push(Target::Class(label));
        }
        Dataset::new(inputs, targets)
    }
}

/// Mini-batch SGD with heavy-ball momentum: `v ← γ v + g`, `θ ← θ − α v`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub steps: usize,
    pub stepsize: f64,
    /// Batch size; values `>= N` mean full batch.
    pub batch: usize,
    pub momentum: f64,
}

pub fn train<T: Scalar>(
    oracle: &LossOracle<T>,
    data: &Dataset<T>,
    cfg: &TrainConfig,
    rng: &mut impl Rng,
) -> Result<LossOracle<T>> {
    data.check_compatible(oracle.family())?;
    if cfg.batch == 0 {
        return Err(Error::invalid("batch size must be positive"));
    }
    let n = data.len();
    let d = oracle.param_dim();
    let (alpha, gamma) = (T::lit(cfg.stepsize), T::lit(cfg.momentum));
    let mut model = oracle.clone();
    let mut velocity = vec![T::zero(); d];
    let full: Vec<usize> = (0..n).collect();
    for step in 0..cfg.steps {
        let batch: Vec<usize> = if cfg.batch >= n { full.clone() } else { index::sample(rng, n, cfg.batch).into_vec() };
        let mut g = vec![T::zero(); d];
        let mut loss = T::zero();
        for &i in &batch {
            let fo = match model.first_order(&data.inputs[i], &data.targets[i]) {
                Ok(fo) => fo,
                Err(Error::Numerical(_)) => return Err(Error::Divergence { step }),
                Err(e) => return Err(e),
            };
            loss += fo.loss;
            for (a, b) in g.iter_mut().zip(fo.grad) {
                *a += b;
            }
        }
        if !loss.is_finite() {
            return Err(Error::Divergence { step });
        }
        let inv = T::one() / T::from_usize(batch.len()).unwrap();
        for ((v, th), gi) in velocity.iter_mut().zip(model.theta.iter_mut()).zip(&g) {
            *v = gamma * *v + *gi * inv;
            *th -= alpha * *v;
        }
        if model.theta.iter().any(|t| !t.is_finite()) {
            return Err(Error::Divergence { step });
        }
    }
    Ok(model)
}
