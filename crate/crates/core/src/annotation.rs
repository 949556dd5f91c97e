//! Observer typing and insertion of their ellipsoids into the program.

use std::collections::HashSet;
use std::fmt;

use thiserror::Error;

use crate::codegen::StraightLineProgram;
use crate::linalg::{LinalgError, Rational};
use crate::spec_model::{to_qform, ControllerSpec, Ellipsoid, ObserverKind, ObserverSpec};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AnnotationError {
    #[error("observer {label}: variable {var} is not a program variable")]
    UnknownVariable { label: String, var: String },
    #[error("observer {label} mixes memory variables {memory:?} with memoryless variables {memoryless:?}")]
    MixedSupport { label: String, memory: Vec<String>, memoryless: Vec<String> },
    #[error("observer {label}: no statement assigns any of {vars:?}")]
    NoAssignment { label: String, vars: Vec<String> },
    #[error("observer {label} is declared inductive but {var} is not a state variable")]
    NotInductive { label: String, var: String },
    #[error("no inductive observer")]
    NoInductive,
    #[error("multiple inductive observers: {0:?}")]
    MultipleInductive(Vec<String>),
    #[error("observer {label}: {source}")]
    Matrix { label: String, source: LinalgError },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize)]
pub enum Tactic {
    AffineEllipsoid,
    SProcedure,
}

impl fmt::Display for Tactic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Tactic::AffineEllipsoid => "AffineEllipsoid",
            Tactic::SProcedure => "SProcedure",
        })
    }
}

/// An ellipsoid predicate placed somewhere in the program.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fact {
    pub ellipsoid: Ellipsoid,
    /// Taken as an assumption rather than derived.
    pub assumed: bool,
}

/// `{pres} stmt {post}`. `stmt == None` is a skip placed before statement `at`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HoareTriple {
    pub label: String,
    pub pres: Vec<usize>,
    pub stmt: Option<usize>,
    pub at: usize,
    pub post: usize,
    pub tactic: Tactic,
    /// `λᵢ` per pre-condition for SProcedure, empty otherwise.
    pub multipliers: Vec<Rational>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Contract {
    pub observer: String,
    pub mu: Rational,
    pub pre: usize,
    pub post: usize,
    /// Copy of `pre` stated at the start of the body.
    pub body_pre: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Assumption {
    pub observer: String,
    pub mu: Rational,
    /// Index of the statement after which the assumption holds.
    pub stmt_index: usize,
    pub fact: usize,
}

/// The program with its contract, assumptions and (after propagation) one
/// triple per annotated statement. Ellipsoids live in `facts` and are
/// referenced by index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnnotatedProgram {
    pub program: StraightLineProgram,
    pub facts: Vec<Fact>,
    pub contract: Option<Contract>,
    pub assumptions: Vec<Assumption>,
    pub triples: Vec<HoareTriple>,
}

impl AnnotatedProgram {
    pub fn bare(program: StraightLineProgram) -> Self {
        Self { program, facts: Vec::new(), contract: None, assumptions: Vec::new(), triples: Vec::new() }
    }

    pub fn add_fact(&mut self, ellipsoid: Ellipsoid, assumed: bool) -> usize {
        self.facts.push(Fact { ellipsoid, assumed });
        self.facts.len() - 1
    }

    pub fn fact(&self, i: usize) -> &Ellipsoid {
        &self.facts[i].ellipsoid
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Classification {
    Inductive,
    Assertive,
}

/// Inductive iff every variable is a state (memory) variable, assertive iff
/// none is.
pub fn classify(observer: &ObserverSpec, program: &StraightLineProgram) -> Result<Classification, AnnotationError> {
    let mut memory = Vec::new();
    let mut memoryless = Vec::new();
    for v in &observer.variables {
        if program.kind_of(v).is_none() {
            return Err(AnnotationError::UnknownVariable { label: observer.label.clone(), var: v.clone() });
        }
        if program.state_vars.contains(v) {
            memory.push(v.clone());
        } else {
            memoryless.push(v.clone());
        }
    }
    match (memory.is_empty(), memoryless.is_empty()) {
        (false, true) => Ok(Classification::Inductive),
        (true, false) => Ok(Classification::Assertive),
        _ => Err(AnnotationError::MixedSupport { label: observer.label.clone(), memory, memoryless }),
    }
}

fn effective_kind(observer: &ObserverSpec, program: &StraightLineProgram) -> Result<Classification, AnnotationError> {
    match observer.kind {
        ObserverKind::Inductive => Ok(Classification::Inductive),
        ObserverKind::Assertive => Ok(Classification::Assertive),
        ObserverKind::Auto => classify(observer, program),
    }
}

/// Index of the first statement after which every observer variable has
/// been assigned. For a single variable that is its first assignment.
pub fn insert_assertive(program: &StraightLineProgram, observer: &ObserverSpec) -> Result<usize, AnnotationError> {
    let mut pending: HashSet<&str> = observer.variables.iter().map(String::as_str).collect();
    for (i, s) in program.stmts.iter().enumerate() {
        pending.remove(s.lhs.as_str());
        if pending.is_empty() {
            return Ok(i);
        }
    }
    Err(AnnotationError::NoAssignment { label: observer.label.clone(), vars: observer.variables.clone() })
}

/// The contract ellipsoid (Q-form over the observer's state variables).
pub fn insert_inductive(program: &StraightLineProgram, observer: &ObserverSpec) -> Result<Ellipsoid, AnnotationError> {
    if let Some(v) = observer.variables.iter().find(|v| !program.state_vars.contains(v)) {
        return Err(AnnotationError::NotInductive { label: observer.label.clone(), var: v.clone() });
    }
    to_qform(&observer.ellipsoid()).map_err(|source| AnnotationError::Matrix { label: observer.label.clone(), source })
}

/// Installs the inductive contract and the assertive assumptions.
pub fn annotate(spec: &ControllerSpec, program: StraightLineProgram) -> Result<AnnotatedProgram, AnnotationError> {
    let mut inductive = Vec::new();
    let mut assertive = Vec::new();
    for o in &spec.observers {
        match effective_kind(o, &program)? {
            Classification::Inductive => inductive.push(o),
            Classification::Assertive => assertive.push(o),
        }
    }
    let observer = match inductive.as_slice() {
        [] => return Err(AnnotationError::NoInductive),
        [one] => *one,
        many => return Err(AnnotationError::MultipleInductive(many.iter().map(|o| o.label.clone()).collect())),
    };
    let contract_ellipsoid = insert_inductive(&program, observer)?;
    let mut annotated = AnnotatedProgram::bare(program);
    let pre = annotated.add_fact(contract_ellipsoid.clone(), false);
    let post = annotated.add_fact(contract_ellipsoid.clone(), false);
    let body_pre = annotated.add_fact(contract_ellipsoid, false);
    annotated.contract = Some(Contract { observer: observer.label.clone(), mu: observer.mu.clone(), pre, post, body_pre });

    let mut placed = Vec::new();
    for o in assertive {
        let stmt_index = insert_assertive(&annotated.program, o)?;
        let e = to_qform(&o.ellipsoid()).map_err(|source| AnnotationError::Matrix { label: o.label.clone(), source })?;
        placed.push((stmt_index, o.label.clone(), o.mu.clone(), e));
    }
    // Attachment order is statement order; ties keep declaration order.
    placed.sort_by_key(|(i, ..)| *i);
    for (stmt_index, observer, mu, e) in placed {
        let fact = annotated.add_fact(e, true);
        annotated.assumptions.push(Assumption { observer, mu, stmt_index, fact });
    }
    Ok(annotated)
}
