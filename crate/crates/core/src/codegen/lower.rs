//! Lowering of a state-space controller to straight-line scalar code.
//!
//! Naming table (indices 1-based, `n` states, `k` outputs):
//!
//! | temp            | meaning                                   |
//! |-----------------|-------------------------------------------|
//! | `x<j>`          | copy of state `j` taken at function entry |
//! | `Sum<i>`        | next value of state `i` (`i ≤ n`)         |
//! | `Sum<n+r>`      | value of output `r`                       |
//! | `Sum<n+k+j>`    | effective input `j` (`y − y_ref` or `y`)  |
//! | `A<i><j>` ...   | gain-block products, e.g. `C11 = c₁₁·x1`  |
//!
//! A generated name that collides with a user name gets a `_<n>` suffix.

use std::collections::HashSet;

use num::{One, Zero};

use super::ir::{AffineAssignment, StraightLineProgram};
use crate::linalg::{Rational, RationalMatrix};
use crate::spec_model::ControllerSpec;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LowerError {
    #[error("at least one state is required for inductive semantics")]
    NoStates,
    #[error("invalid controller spec: {0}")]
    Invalid(String),
}

struct Names<'a> {
    reserved: HashSet<&'a str>,
    used: HashSet<String>,
}

impl Names<'_> {
    fn fresh(&mut self, base: String) -> String {
        let mut name = base.clone();
        let mut suffix = 1;
        while self.reserved.contains(name.as_str()) || self.used.contains(&name) {
            name = format!("{base}_{suffix}");
            suffix += 1;
        }
        self.used.insert(name.clone());
        name
    }
}

pub fn lower(spec: &ControllerSpec) -> Result<StraightLineProgram, LowerError> {
    spec.validate().map_err(|e| LowerError::Invalid(e.to_string()))?;
    let (n, m, k) = (spec.n_states(), spec.n_inputs(), spec.n_outputs());
    if n == 0 {
        return Err(LowerError::NoStates);
    }
    let io_inputs = spec.io_inputs();
    let mut names = Names {
        reserved: io_inputs
            .iter()
            .chain(&spec.output_names)
            .chain(&spec.state_names)
            .map(String::as_str)
            .chain(std::iter::once(spec.name.as_str()))
            .collect(),
        used: HashSet::new(),
    };
    let mut temps = Vec::new();
    let mut stmts = Vec::new();
    let mut fresh = |base: String, temps: &mut Vec<String>| {
        let name = names.fresh(base);
        temps.push(name.clone());
        name
    };

    // Sum indices are allocated up front so numbering does not depend on sparsity.
    let state_sums: Vec<String> = (1..=n).map(|i| fresh(format!("Sum{i}"), &mut temps)).collect();
    let output_sums: Vec<String> = (1..=k).map(|r| fresh(format!("Sum{}", n + r), &mut temps)).collect();
    let input_sums: Vec<String> = (1..=m).map(|j| fresh(format!("Sum{}", n + k + j), &mut temps)).collect();
    // Keep declaration order equal to first assignment order.
    temps.clear();

    let reads_state = |j: usize| (0..n).any(|i| !spec.a[(i, j)].is_zero()) || (0..k).any(|r| !spec.c[(r, j)].is_zero());
    let mut state_copies = vec![String::new(); n];
    for j in 0..n {
        if reads_state(j) {
            let name = fresh(format!("x{}", j + 1), &mut temps);
            stmts.push(AffineAssignment::copy(&name, &spec.state_names[j]));
            state_copies[j] = name;
        }
    }

    let one = Rational::one();
    for (j, input) in spec.input_names.iter().enumerate() {
        let mut coeffs = vec![(input.clone(), one.clone())];
        if let Some(r) = spec.references.get(input) {
            coeffs.push((r.clone(), -one.clone()));
        }
        temps.push(input_sums[j].clone());
        stmts.push(AffineAssignment::new(&input_sums[j], coeffs));
    }

    let mut gain_sum = |prefix: char,
                        row: usize,
                        mat: &RationalMatrix,
                        sources: &[String],
                        terms: &mut Vec<(String, Rational)>,
                        temps: &mut Vec<String>,
                        stmts: &mut Vec<AffineAssignment>| {
        for (j, src) in sources.iter().enumerate() {
            let g = &mat[(row, j)];
            if g.is_zero() {
                continue;
            }
            let name = fresh(format!("{prefix}{}{}", row + 1, j + 1), temps);
            stmts.push(AffineAssignment::new(&name, vec![(src.clone(), g.clone())]));
            terms.push((name, one.clone()));
        }
    };

    for r in 0..k {
        let mut terms = Vec::new();
        gain_sum('C', r, &spec.c, &state_copies, &mut terms, &mut temps, &mut stmts);
        gain_sum('D', r, &spec.d, &input_sums, &mut terms, &mut temps, &mut stmts);
        temps.push(output_sums[r].clone());
        stmts.push(AffineAssignment::new(&output_sums[r], terms));
        stmts.push(AffineAssignment::copy(&spec.output_names[r], &output_sums[r]));
    }

    for i in 0..n {
        let mut terms = Vec::new();
        gain_sum('A', i, &spec.a, &state_copies, &mut terms, &mut temps, &mut stmts);
        gain_sum('B', i, &spec.b, &input_sums, &mut terms, &mut temps, &mut stmts);
        temps.push(state_sums[i].clone());
        stmts.push(AffineAssignment::new(&state_sums[i], terms));
    }
    for i in 0..n {
        stmts.push(AffineAssignment::copy(&spec.state_names[i], &state_sums[i]));
    }

    let program = StraightLineProgram {
        name: spec.name.clone(),
        inputs: io_inputs,
        outputs: spec.output_names.clone(),
        state_vars: spec.state_names.clone(),
        temps,
        input_signals: input_sums,
        stmts,
    };
    debug_assert_eq!(program.check(), Ok(()));
    Ok(program)
}
