use std::collections::HashMap;

use num::Zero;

use super::ir::{ProgramError, StraightLineProgram};
use crate::linalg::Rational;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum InterpretError {
    #[error("expected {expected} {what} values, got {found}")]
    Arity { what: &'static str, expected: usize, found: usize },
    #[error(transparent)]
    Program(#[from] ProgramError),
    #[error("output {0} is never assigned")]
    Unassigned(String),
}

/// Exact evaluation of one pass through the program.
///
/// `inputs` follows `program.inputs` (references included) and `state`
/// follows `program.state_vars`. Returns `(outputs, next_state)`.
pub fn interpret(
    program: &StraightLineProgram,
    inputs: &[Rational],
    state: &[Rational],
) -> Result<(Vec<Rational>, Vec<Rational>), InterpretError> {
    if inputs.len() != program.inputs.len() {
        return Err(InterpretError::Arity { what: "input", expected: program.inputs.len(), found: inputs.len() });
    }
    if state.len() != program.state_vars.len() {
        return Err(InterpretError::Arity { what: "state", expected: program.state_vars.len(), found: state.len() });
    }
    let mut env: HashMap<&str, Rational> = HashMap::new();
    for (name, v) in program.inputs.iter().zip(inputs).chain(program.state_vars.iter().zip(state)) {
        env.insert(name, v.clone());
    }
    for (index, s) in program.stmts.iter().enumerate() {
        let mut acc = s.constant.clone();
        for (var, c) in &s.coeffs {
            let v = env.get(var.as_str()).ok_or_else(|| ProgramError::UseBeforeDef {
                index,
                lhs: s.lhs.clone(),
                var: var.clone(),
            })?;
            if !c.is_zero() {
                acc += c * v;
            }
        }
        env.insert(&s.lhs, acc);
    }
    let outputs = program
        .outputs
        .iter()
        .map(|o| env.get(o.as_str()).cloned().ok_or_else(|| InterpretError::Unassigned(o.clone())))
        .collect::<Result<Vec<_>, _>>()?;
    let next = program.state_vars.iter().map(|s| env[s.as_str()].clone()).collect();
    Ok((outputs, next))
}
