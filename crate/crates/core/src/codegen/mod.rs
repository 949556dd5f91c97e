//! Straight-line IR, lowering from the state-space spec, and C emission.

mod emit;
mod interpret;
mod ir;
mod lower;

pub use emit::{c_lvalue, emit_c, matrix_name, render_statement, EmittedC};
pub use interpret::{interpret, InterpretError};
pub use ir::{AffineAssignment, ProgramError, StraightLineProgram, VarKind};
pub use lower::{lower, LowerError};
