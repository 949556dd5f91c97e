//! Model-level certificate: the invariance LMI and a simulation oracle.
//!
//! With `α = 1 − μ` of the inductive observer and `Y` the weight of the
//! input bound, `{x | xᵀPx ≤ 1}` is invariant under `x₊ = Ax + By` for all
//! `yᵀYy ≤ 1` whenever
//!
//! ```text
//! ⎡ AᵀPA − (1−α)P    AᵀPB     ⎤
//! ⎣ BᵀPA             BᵀPB − αY⎦ ⪯ 0.
//! ```
//!
//! Several assertive input observers `(μₐ, Pₐ)` fold into `αY = Σ μₐ·Pₐ`.

use num::{One, Signed, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::annotation::{classify, Classification};
use crate::codegen::{lower, LowerError};
use crate::linalg::{ldlt_psd, to_f64, LinalgError, PsdVerdict, Rational, RationalMatrix};
use crate::spec_model::{to_pform, ControllerSpec, ObserverKind};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StabilityError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("input bound of observer {0} is singular")]
    SingularInputBound(String),
    #[error("no inductive observer over the states")]
    NoInductive,
    #[error("observer {label}: {reason}")]
    Observer { label: String, reason: String },
    #[error("alpha must lie in (0, 1)")]
    AlphaRange,
    #[error("input bound weight is singular; cannot sample inside it")]
    UnboundedInputs,
    #[error(transparent)]
    Lower(#[from] LowerError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// `P` over the states (in state order), `α`, and the input weight `Y`
/// over the effective inputs (in input order).
#[derive(Debug, Clone, PartialEq)]
pub struct StabilityCertificate {
    pub p: RationalMatrix,
    pub alpha: Rational,
    pub input_weight: RationalMatrix,
}

/// Reorders a form over `vars` into the order of `names`; `None` if some
/// variable is not in `names`.
fn embed(m: &RationalMatrix, vars: &[String], names: &[String]) -> Option<RationalMatrix> {
    let pos: Vec<usize> = vars.iter().map(|v| names.iter().position(|n| n == v)).collect::<Option<_>>()?;
    let mut out = RationalMatrix::zeros(names.len(), names.len());
    for (i, &pi) in pos.iter().enumerate() {
        for (j, &pj) in pos.iter().enumerate() {
            out[(pi, pj)] = m[(i, j)].clone();
        }
    }
    Some(out)
}

impl StabilityCertificate {
    /// Builds the certificate from the observers declared in the spec.
    pub fn from_spec(spec: &ControllerSpec) -> Result<Self, StabilityError> {
        let program = lower(spec)?;
        let mut p = None;
        let mut alpha = Rational::zero();
        let mut weight = RationalMatrix::zeros(spec.n_inputs(), spec.n_inputs());
        for o in &spec.observers {
            let kind = match o.kind {
                ObserverKind::Inductive => Classification::Inductive,
                ObserverKind::Assertive => Classification::Assertive,
                ObserverKind::Auto => classify(o, &program).map_err(|e| StabilityError::Observer {
                    label: o.label.clone(),
                    reason: e.to_string(),
                })?,
            };
            let pform = to_pform(&o.ellipsoid()).map_err(|_| StabilityError::SingularInputBound(o.label.clone()))?;
            match kind {
                Classification::Inductive => {
                    if p.is_some() {
                        return Err(StabilityError::Observer { label: o.label.clone(), reason: "second inductive observer".into() });
                    }
                    if o.variables.len() != spec.n_states() {
                        return Err(StabilityError::Observer {
                            label: o.label.clone(),
                            reason: "inductive observer must cover every state".into(),
                        });
                    }
                    p = embed(&pform.matrix, &o.variables, &spec.state_names);
                    alpha = Rational::one() - &o.mu;
                }
                Classification::Assertive => {
                    let embedded = embed(&pform.matrix, &o.variables, &program.input_signals).ok_or_else(|| {
                        StabilityError::Observer {
                            label: o.label.clone(),
                            reason: "assertive observer does not bound controller inputs".into(),
                        }
                    })?;
                    weight = weight.add(&embedded.scale(&o.mu))?;
                }
            }
        }
        let p = p.ok_or(StabilityError::NoInductive)?;
        if !(alpha.is_positive() && alpha < Rational::one()) {
            return Err(StabilityError::AlphaRange);
        }
        let input_weight = weight.scale(&alpha.recip());
        Ok(Self { p, alpha, input_weight })
    }
}

/// The (symmetric) LMI block matrix; the certificate holds iff it is ⪯ 0.
pub fn lmi_matrix(spec: &ControllerSpec, cert: &StabilityCertificate) -> Result<RationalMatrix, StabilityError> {
    let (n, m) = (spec.n_states(), spec.n_inputs());
    if cert.p.shape() != (n, n) || cert.input_weight.shape() != (m, m) {
        return Err(StabilityError::Dimension(format!(
            "P is {:?} and Y is {:?} for {n} states, {m} inputs",
            cert.p.shape(),
            cert.input_weight.shape()
        )));
    }
    let at = spec.a.transpose();
    let bt = spec.b.transpose();
    let pa = cert.p.mul(&spec.a)?;
    let pb = cert.p.mul(&spec.b)?;
    let one_minus = Rational::one() - &cert.alpha;
    let tl = at.mul(&pa)?.sub(&cert.p.scale(&one_minus))?;
    let tr = at.mul(&pb)?;
    let bl = bt.mul(&pa)?;
    let br = bt.mul(&pb)?.sub(&cert.input_weight.scale(&cert.alpha))?;
    Ok(RationalMatrix::block2x2(&tl, &tr, &bl, &br)?)
}

/// Exact verdict on `−LMI ⪰ 0`, i.e. the non-strict LMI.
pub fn check_lmi(spec: &ControllerSpec, cert: &StabilityCertificate) -> Result<PsdVerdict, StabilityError> {
    let m = lmi_matrix(spec, cert)?;
    Ok(ldlt_psd(&m.scale(&-Rational::one()))?)
}

/// `(Ax + By)ᵀP(Ax + By) ≤ xᵀPx`, exactly.
pub fn one_step_decrease(
    spec: &ControllerSpec,
    p: &RationalMatrix,
    x: &[Rational],
    y: &[Rational],
) -> Result<bool, StabilityError> {
    if x.len() != spec.n_states() || y.len() != spec.n_inputs() || p.shape() != (x.len(), x.len()) {
        return Err(StabilityError::Dimension(format!("x has {}, y has {} entries", x.len(), y.len())));
    }
    let next = step(spec, x, y)?;
    Ok(p.quadratic_form(&next)? <= p.quadratic_form(x)?)
}

/// `Ax + By`, exactly.
pub fn step(spec: &ControllerSpec, x: &[Rational], y: &[Rational]) -> Result<Vec<Rational>, StabilityError> {
    let ax = spec.a.apply(x)?;
    let by = spec.b.apply(y)?;
    Ok(ax.into_iter().zip(by).map(|(a, b)| a + b).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub enum InputMode {
    Zero,
    Constant(Vec<f64>),
    /// Uniform over `{y | yᵀYy ≤ 1}` by rejection from its bounding box.
    UniformInBound,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimRow {
    pub step: usize,
    pub state: Vec<f64>,
    /// Effective inputs (`y − y_ref`).
    pub input: Vec<f64>,
    pub output: Vec<f64>,
    /// `xᵀPx`.
    pub level: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimTrace {
    pub rows: Vec<SimRow>,
    pub max_level: f64,
    pub seed: u64,
}

struct Dense {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Dense {
    fn of(m: &RationalMatrix) -> Self {
        Self { rows: m.rows(), cols: m.cols(), data: m.to_f64() }
    }

    fn apply(&self, v: &[f64]) -> Vec<f64> {
        (0..self.rows).map(|i| (0..self.cols).map(|j| self.data[i * self.cols + j] * v[j]).sum()).collect()
    }

    fn quad(&self, v: &[f64]) -> f64 {
        self.apply(v).iter().zip(v).map(|(a, b)| a * b).sum()
    }
}

/// Runs `x₊ = Ax + By`, `u = Cx + Dy` in double precision from `x0`.
/// Returns `steps + 1` rows; the input of row `k` drives the step to `k + 1`.
pub fn simulate(
    spec: &ControllerSpec,
    cert: &StabilityCertificate,
    steps: usize,
    seed: u64,
    mode: &InputMode,
) -> Result<SimTrace, StabilityError> {
    let m = spec.n_inputs();
    let (a, b, c, d, p) = (Dense::of(&spec.a), Dense::of(&spec.b), Dense::of(&spec.c), Dense::of(&spec.d), Dense::of(&cert.p));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (box_half, weight) = match mode {
        InputMode::UniformInBound => {
            let inv = cert.input_weight.invert().map_err(|_| StabilityError::UnboundedInputs)?;
            let half: Vec<f64> = (0..m).map(|j| to_f64(&inv[(j, j)]).sqrt()).collect();
            (half, Some(Dense::of(&cert.input_weight)))
        }
        InputMode::Constant(v) if v.len() != m => {
            return Err(StabilityError::Dimension(format!("constant input has {} entries, expected {m}", v.len())));
        }
        _ => (Vec::new(), None),
    };
    let mut x: Vec<f64> = spec.x0.iter().map(to_f64).collect();
    let mut rows = Vec::with_capacity(steps + 1);
    let mut max_level = f64::NEG_INFINITY;
    for k in 0..=steps {
        let y = match mode {
            InputMode::Zero => vec![0.0; m],
            InputMode::Constant(v) => v.clone(),
            InputMode::UniformInBound => {
                let w = weight.as_ref().expect("set above");
                loop {
                    let y: Vec<f64> = box_half.iter().map(|&h| if h > 0.0 { rng.gen_range(-h..=h) } else { 0.0 }).collect();
                    if w.quad(&y) <= 1.0 {
                        break y;
                    }
                }
            }
        };
        let level = p.quad(&x);
        max_level = max_level.max(level);
        let output: Vec<f64> = c.apply(&x).iter().zip(d.apply(&y)).map(|(s, t)| s + t).collect();
        let next: Vec<f64> = a.apply(&x).iter().zip(b.apply(&y)).map(|(s, t)| s + t).collect();
        rows.push(SimRow { step: k, state: x, input: y, output, level });
        x = next;
    }
    Ok(SimTrace { rows, max_level, seed })
}
