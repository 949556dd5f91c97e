use std::collections::HashSet;
use std::fmt;

use num::Zero;

use crate::linalg::{render_exact, Rational};

/// `lhs := Σ coeffᵢ·varᵢ + constant`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct AffineAssignment {
    pub lhs: String,
    /// Terms in source order; variables are distinct.
    pub coeffs: Vec<(String, Rational)>,
    pub constant: Rational,
}

impl AffineAssignment {
    pub fn new(lhs: impl Into<String>, coeffs: Vec<(String, Rational)>) -> Self {
        Self { lhs: lhs.into(), coeffs, constant: Rational::zero() }
    }

    /// `lhs := src`
    pub fn copy(lhs: impl Into<String>, src: impl Into<String>) -> Self {
        Self::new(lhs, vec![(src.into(), Rational::from_integer(1.into()))])
    }

    pub fn reads(&self) -> impl Iterator<Item = &str> {
        self.coeffs.iter().map(|(v, _)| v.as_str())
    }

    pub fn coeff(&self, var: &str) -> Option<&Rational> {
        self.coeffs.iter().find(|(v, _)| v == var).map(|(_, c)| c)
    }
}

impl fmt::Display for AffineAssignment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let terms: Vec<String> = self.coeffs.iter().map(|(v, c)| format!("{}*{v}", render_exact(c))).collect();
        write!(f, "{} := {}", self.lhs, terms.join(" + "))?;
        if !self.constant.is_zero() {
            write!(f, " + {}", render_exact(&self.constant))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum VarKind {
    Input,
    Output,
    State,
    Temp,
}

/// Straight-line loop body over named scalar variables.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StraightLineProgram {
    pub name: String,
    /// Raw io inputs, references included.
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub state_vars: Vec<String>,
    pub temps: Vec<String>,
    /// Temp carrying the effective value of each controller input.
    pub input_signals: Vec<String>,
    pub stmts: Vec<AffineAssignment>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ProgramError {
    #[error("statement {index} ({lhs}) reads {var} before it is defined")]
    UseBeforeDef { index: usize, lhs: String, var: String },
    #[error("statement {index} assigns {lhs}, which is not an output, state or temp")]
    BadTarget { index: usize, lhs: String },
    #[error("variable {0} declared twice")]
    Duplicate(String),
}

impl StraightLineProgram {
    pub fn kind_of(&self, var: &str) -> Option<VarKind> {
        if self.inputs.iter().any(|v| v == var) {
            Some(VarKind::Input)
        } else if self.outputs.iter().any(|v| v == var) {
            Some(VarKind::Output)
        } else if self.state_vars.iter().any(|v| v == var) {
            Some(VarKind::State)
        } else if self.temps.iter().any(|v| v == var) {
            Some(VarKind::Temp)
        } else {
            None
        }
    }

    /// Inputs and states are defined on entry; everything else must be
    /// assigned before it is read.
    pub fn check(&self) -> Result<(), ProgramError> {
        let mut declared = HashSet::new();
        for v in self.inputs.iter().chain(&self.outputs).chain(&self.state_vars).chain(&self.temps) {
            if !declared.insert(v.as_str()) {
                return Err(ProgramError::Duplicate(v.clone()));
            }
        }
        let mut defined: HashSet<&str> = self.inputs.iter().chain(&self.state_vars).map(String::as_str).collect();
        for (index, s) in self.stmts.iter().enumerate() {
            if let Some(var) = s.reads().find(|v| !defined.contains(v)) {
                return Err(ProgramError::UseBeforeDef { index, lhs: s.lhs.clone(), var: var.to_string() });
            }
            match self.kind_of(&s.lhs) {
                Some(VarKind::Output | VarKind::State | VarKind::Temp) => {}
                _ => return Err(ProgramError::BadTarget { index, lhs: s.lhs.clone() }),
            }
            defined.insert(s.lhs.as_str());
        }
        Ok(())
    }

    /// Variables read by statements strictly after `index`.
    pub fn read_after(&self, index: usize) -> HashSet<&str> {
        self.stmts.iter().skip(index + 1).flat_map(|s| s.reads()).collect()
    }
}
