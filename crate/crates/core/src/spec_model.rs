//! Controller specifications, observers and ellipsoids.
//!
//! Specs are read from JSON where every number is a decimal string so that
//! the values enter the pipeline exactly. See `docs/spec-format.md`.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use num::{One, Signed, Zero};
use serde::Deserialize;
use thiserror::Error;

use crate::linalg::{
    ldlt_psd, parse_decimal, to_f64, Interval, LinalgError, PsdStatus, Rational, RationalMatrix,
};

#[derive(Debug, Error)]
pub enum SpecError {
    #[error("file not found: {0}")]
    NotFound(String),
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("schema violation: {0}")]
    Schema(String),
    #[error("{field}: {message}")]
    Field { field: String, message: String },
    #[error("{field}: {source}")]
    Numeric { field: String, source: LinalgError },
}

fn field_err(field: impl Into<String>, message: impl Into<String>) -> SpecError {
    SpecError::Field { field: field.into(), message: message.into() }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObserverKind {
    Inductive,
    Assertive,
    Auto,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize)]
pub enum MatrixForm {
    /// `{x | xᵀPx ≤ 1}`
    P,
    /// `{x | [[1, xᵀ], [x, Q]] ⪰ 0}`
    Q,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObserverSpec {
    pub label: String,
    pub kind: ObserverKind,
    pub variables: Vec<String>,
    pub form: MatrixForm,
    pub matrix: RationalMatrix,
    pub mu: Rational,
}

impl ObserverSpec {
    pub fn ellipsoid(&self) -> Ellipsoid {
        Ellipsoid {
            form: self.form,
            matrix: self.matrix.clone(),
            support: self.variables.clone(),
            degenerate_ok: self.form == MatrixForm::Q,
        }
    }
}

/// An ellipsoid over an ordered list of named variables.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Ellipsoid {
    pub form: MatrixForm,
    pub matrix: RationalMatrix,
    pub support: Vec<String>,
    pub degenerate_ok: bool,
}

impl Ellipsoid {
    /// A Q-form ellipsoid; rank-deficient matrices are allowed.
    pub fn qform(matrix: RationalMatrix, support: Vec<String>) -> Self {
        Self { form: MatrixForm::Q, matrix, support, degenerate_ok: true }
    }

    pub fn pform(matrix: RationalMatrix, support: Vec<String>) -> Self {
        Self { form: MatrixForm::P, matrix, support, degenerate_ok: false }
    }

    pub fn dim(&self) -> usize {
        self.support.len()
    }

    /// Checks symmetry, dimension, and definiteness for the form.
    pub fn validate(&self) -> Result<(), SpecError> {
        let m = &self.matrix;
        if !m.is_square() || m.rows() != self.support.len() {
            return Err(field_err(
                "matrix",
                format!("{}x{} matrix over {} variables", m.rows(), m.cols(), self.support.len()),
            ));
        }
        if !m.is_symmetric() {
            return Err(field_err("matrix", "not symmetric"));
        }
        let verdict = ldlt_psd(m).map_err(|source| SpecError::Numeric { field: "matrix".into(), source })?;
        match self.form {
            MatrixForm::Q if verdict.status != PsdStatus::ProvenPsd => {
                Err(field_err("matrix", "Q-form matrix is not positive semidefinite"))
            }
            MatrixForm::P if !is_positive_definite(m) => {
                Err(field_err("matrix", "P-form matrix is not positive definite"))
            }
            _ => Ok(()),
        }
    }

    /// Exact membership test. P-form: `xᵀPx ≤ 1`. Q-form: the Schur matrix
    /// `[[1, xᵀ], [x, Q]]` is PSD.
    pub fn contains(&self, x: &[Rational]) -> Result<bool, LinalgError> {
        match self.form {
            MatrixForm::P => Ok(self.matrix.quadratic_form(x)? <= Rational::one()),
            MatrixForm::Q => schur_member(&self.matrix, x),
        }
    }
}

/// `x ∈ 𝓖_Q` decided exactly through the Schur matrix.
pub fn schur_member(q: &RationalMatrix, x: &[Rational]) -> Result<bool, LinalgError> {
    let one = RationalMatrix::identity(1);
    let col = RationalMatrix::column(x);
    let schur = RationalMatrix::block2x2(&one, &col.transpose(), &col, q)?;
    Ok(ldlt_psd(&schur)?.is_psd())
}

/// Strict positivity of every LDLᵀ pivot.
pub fn is_positive_definite(m: &RationalMatrix) -> bool {
    if m.rows() == 0 {
        return true;
    }
    match ldlt_psd(m) {
        Ok(v) => v.is_psd() && v.margin.as_ref().is_some_and(Signed::is_positive),
        Err(_) => false,
    }
}

/// Converts to Q-form; idempotent on Q-form input.
pub fn to_qform(e: &Ellipsoid) -> Result<Ellipsoid, LinalgError> {
    match e.form {
        MatrixForm::Q => Ok(e.clone()),
        MatrixForm::P => Ok(Ellipsoid::qform(e.matrix.invert()?, e.support.clone())),
    }
}

/// Converts a nonsingular Q-form back to P-form.
pub fn to_pform(e: &Ellipsoid) -> Result<Ellipsoid, LinalgError> {
    match e.form {
        MatrixForm::P => Ok(e.clone()),
        MatrixForm::Q => Ok(Ellipsoid::pform(e.matrix.invert()?, e.support.clone())),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AxisBound {
    /// Certified enclosure of an eigenvalue of `P`.
    pub sigma: Interval,
    /// Enclosure of `1/√σ`: the half-length of the corresponding principal axis.
    pub half_length: Interval,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateBounds {
    /// `|xᵢ| ≤ √rᵢ` with the exact radicand `rᵢ = (P⁻¹)ᵢᵢ`.
    pub coordinate_radicands: Vec<Rational>,
    pub axes: Vec<AxisBound>,
}

/// Coordinate bounds and principal-axis bounds for a P-form ellipsoid.
pub fn state_bounds(e: &Ellipsoid) -> Result<StateBounds, SpecError> {
    let p = match e.form {
        MatrixForm::P => e.matrix.clone(),
        MatrixForm::Q => e.matrix.invert().map_err(|source| SpecError::Numeric { field: "P".into(), source })?,
    };
    if !is_positive_definite(&p) {
        return Err(field_err("P", "not positive definite"));
    }
    let q = p.invert().map_err(|source| SpecError::Numeric { field: "P".into(), source })?;
    let n = p.rows();
    let coordinate_radicands = (0..n).map(|i| q[(i, i)].clone()).collect();

    let pf = nalgebra::DMatrix::from_row_slice(n, n, &p.to_f64());
    let eig = nalgebra::SymmetricEigen::new(pf);
    let mut axes = Vec::with_capacity(n);
    for k in 0..n {
        let lambda = eig.eigenvalues[k];
        let v: Vec<f64> = eig.eigenvectors.column(k).iter().copied().collect();
        let sigma = eigen_enclosure(&p, lambda, &v);
        let lo = sigma.lo.max(f64::MIN_POSITIVE);
        let half_length = Interval {
            lo: (1.0 / sigma.hi.next_up().sqrt().next_up()).next_down(),
            hi: (1.0 / lo.next_down().max(f64::MIN_POSITIVE).sqrt().next_down()).next_up(),
        };
        axes.push(AxisBound { sigma, half_length });
    }
    axes.sort_by(|a, b| a.sigma.lo.total_cmp(&b.sigma.lo));
    Ok(StateBounds { coordinate_radicands, axes })
}

/// For symmetric `p` and any nonzero `v`, some eigenvalue lies within
/// `‖pv − λv‖ / ‖v‖` of `λ`. The residual ratio is computed exactly.
fn eigen_enclosure(p: &RationalMatrix, lambda: f64, v: &[f64]) -> Interval {
    let exact_v: Vec<Rational> = v.iter().map(|&x| Rational::from_float(x).unwrap_or_else(Rational::zero)).collect();
    let exact_l = Rational::from_float(lambda).unwrap_or_else(Rational::zero);
    let pv = p.apply(&exact_v).expect("square");
    let residual: Rational = pv
        .iter()
        .zip(&exact_v)
        .map(|(a, b)| {
            let d = a - &exact_l * b;
            &d * &d
        })
        .fold(Rational::zero(), |acc, x| acc + x);
    let norm: Rational = exact_v.iter().map(|x| x * x).fold(Rational::zero(), |acc, x| acc + x);
    let ratio = residual / norm;
    // Upper bound on sqrt(ratio) in floats.
    let r = to_f64(&ratio).next_up().sqrt().next_up().next_up();
    Interval { lo: (lambda - r).next_down(), hi: (lambda + r).next_up() }
}

/// A validated state-space controller `x₊ = Ax + By`, `u = Cx + Dy`.
#[derive(Debug, Clone, PartialEq)]
pub struct ControllerSpec {
    pub name: String,
    pub a: RationalMatrix,
    pub b: RationalMatrix,
    pub c: RationalMatrix,
    pub d: RationalMatrix,
    pub state_names: Vec<String>,
    pub input_names: Vec<String>,
    pub output_names: Vec<String>,
    /// Optional reference signal per input; the controller then acts on `input − reference`.
    pub references: BTreeMap<String, String>,
    pub x0: Vec<Rational>,
    pub observers: Vec<ObserverSpec>,
}

impl ControllerSpec {
    pub fn n_states(&self) -> usize {
        self.state_names.len()
    }

    pub fn n_inputs(&self) -> usize {
        self.input_names.len()
    }

    pub fn n_outputs(&self) -> usize {
        self.output_names.len()
    }

    pub fn from_json(text: &str) -> Result<Self, SpecError> {
        let raw: RawSpec = serde_json::from_str(text).map_err(|e| SpecError::Schema(e.to_string()))?;
        raw.validate()
    }

    /// Checks every structural invariant; used after programmatic construction.
    pub fn validate(&self) -> Result<(), SpecError> {
        let (n, m, k) = (self.n_states(), self.n_inputs(), self.n_outputs());
        check_shape("A", &self.a, n, n)?;
        check_shape("B", &self.b, n, m)?;
        check_shape("C", &self.c, k, n)?;
        check_shape("D", &self.d, k, m)?;
        if self.x0.len() != n {
            return Err(field_err("x0", format!("expected {n} entries, got {}", self.x0.len())));
        }
        check_identifier("name", &self.name)?;
        let mut seen = HashSet::new();
        for (field, names) in [("states", &self.state_names), ("inputs", &self.input_names), ("outputs", &self.output_names)] {
            for name in names {
                check_identifier(field, name)?;
                if !seen.insert(name.as_str()) {
                    return Err(field_err(field, format!("duplicate name {name:?}")));
                }
            }
        }
        for (input, reference) in &self.references {
            if !self.input_names.contains(input) {
                return Err(field_err("references", format!("{input:?} is not an input")));
            }
            check_identifier("references", reference)?;
            if !seen.insert(reference.as_str()) {
                return Err(field_err("references", format!("duplicate name {reference:?}")));
            }
        }
        let mut labels = HashSet::new();
        for (i, o) in self.observers.iter().enumerate() {
            let f = |s: &str| format!("observers[{i}].{s}");
            check_identifier(&f("label"), &o.label)?;
            if !labels.insert(o.label.as_str()) {
                return Err(field_err(f("label"), format!("duplicate label {:?}", o.label)));
            }
            if o.variables.is_empty() {
                return Err(field_err(f("variables"), "empty variable list"));
            }
            let mut vars = HashSet::new();
            for v in &o.variables {
                check_identifier(&f("variables"), v)?;
                if !vars.insert(v) {
                    return Err(field_err(f("variables"), format!("duplicate variable {v:?}")));
                }
            }
            if !(o.mu.is_positive() && o.mu < Rational::one()) {
                return Err(field_err(f("mu"), "multiplier must lie in (0, 1)"));
            }
            o.ellipsoid().validate().map_err(|e| match e {
                SpecError::Field { message, .. } => field_err(f("matrix"), message),
                other => other,
            })?;
        }
        Ok(())
    }

    /// Effective input vector `y − y_ref` for raw input values ordered as
    /// `io_inputs()`.
    pub fn io_inputs(&self) -> Vec<String> {
        let mut out = Vec::new();
        for name in &self.input_names {
            out.push(name.clone());
            if let Some(r) = self.references.get(name) {
                out.push(r.clone());
            }
        }
        out
    }
}

pub fn load_spec(path: impl AsRef<Path>) -> Result<ControllerSpec, SpecError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| {
        if source.kind() == std::io::ErrorKind::NotFound {
            SpecError::NotFound(path.display().to_string())
        } else {
            SpecError::Io { path: path.display().to_string(), source }
        }
    })?;
    ControllerSpec::from_json(&text)
}

fn check_shape(field: &str, m: &RationalMatrix, rows: usize, cols: usize) -> Result<(), SpecError> {
    if m.shape() != (rows, cols) {
        return Err(field_err(field, format!("expected {rows}x{cols}, got {}x{}", m.rows(), m.cols())));
    }
    Ok(())
}

pub(crate) fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

fn check_identifier(field: &str, s: &str) -> Result<(), SpecError> {
    if is_identifier(s) {
        Ok(())
    } else {
        Err(field_err(field, format!("{s:?} is not a C identifier")))
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpec {
    name: String,
    #[serde(rename = "A")]
    a: Vec<Vec<String>>,
    #[serde(rename = "B")]
    b: Vec<Vec<String>>,
    #[serde(rename = "C")]
    c: Vec<Vec<String>>,
    #[serde(rename = "D")]
    d: Vec<Vec<String>>,
    states: Vec<String>,
    inputs: Vec<String>,
    outputs: Vec<String>,
    #[serde(default)]
    references: BTreeMap<String, String>,
    x0: Option<Vec<String>>,
    #[serde(default)]
    observers: Vec<RawObserver>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawObserver {
    label: String,
    kind: ObserverKind,
    form: String,
    matrix: Vec<Vec<String>>,
    mu: String,
    variables: Vec<String>,
}

/// An empty row list yields a `0 x empty_cols` matrix.
fn parse_matrix(field: &str, rows: &[Vec<String>], empty_cols: usize) -> Result<RationalMatrix, SpecError> {
    let mut out = Vec::with_capacity(rows.len());
    for (i, row) in rows.iter().enumerate() {
        let mut r = Vec::with_capacity(row.len());
        for (j, s) in row.iter().enumerate() {
            r.push(parse_decimal(s).map_err(|source| SpecError::Numeric { field: format!("{field}[{i}][{j}]"), source })?);
        }
        out.push(r);
    }
    if out.is_empty() {
        return Ok(RationalMatrix::zeros(0, empty_cols));
    }
    RationalMatrix::from_rows(out).map_err(|source| SpecError::Numeric { field: field.to_string(), source })
}

impl RawSpec {
    fn validate(self) -> Result<ControllerSpec, SpecError> {
        let (n, m) = (self.states.len(), self.inputs.len());
        let a = parse_matrix("A", &self.a, n)?;
        let b = parse_matrix("B", &self.b, m)?;
        let c = parse_matrix("C", &self.c, n)?;
        let d = parse_matrix("D", &self.d, m)?;
        let x0 = match self.x0 {
            Some(v) => v
                .iter()
                .enumerate()
                .map(|(i, s)| parse_decimal(s).map_err(|source| SpecError::Numeric { field: format!("x0[{i}]"), source }))
                .collect::<Result<Vec<_>, _>>()?,
            None => vec![Rational::zero(); n],
        };
        let mut observers = Vec::with_capacity(self.observers.len());
        for (i, o) in self.observers.into_iter().enumerate() {
            let form = match o.form.as_str() {
                "P" => MatrixForm::P,
                "Q" => MatrixForm::Q,
                other => return Err(field_err(format!("observers[{i}].form"), format!("expected \"P\" or \"Q\", got {other:?}"))),
            };
            let matrix = parse_matrix(&format!("observers[{i}].matrix"), &o.matrix, 0)?;
            let mu = parse_decimal(&o.mu).map_err(|source| SpecError::Numeric { field: format!("observers[{i}].mu"), source })?;
            observers.push(ObserverSpec { label: o.label, kind: o.kind, variables: o.variables, form, matrix, mu });
        }
        let spec = ControllerSpec {
            name: self.name,
            a,
            b,
            c,
            d,
            state_names: self.states,
            input_names: self.inputs,
            output_names: self.outputs,
            references: self.references,
            x0,
            observers,
        };
        spec.validate()?;
        Ok(spec)
    }
}
