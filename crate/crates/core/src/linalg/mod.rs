//! Exact rational matrix algebra and PSD decision procedures.

mod interval;
mod matrix;
mod psd;
mod rational;

use thiserror::Error;

pub use interval::{interval_cholesky_psd, lift, Interval, DEFAULT_SHIFT};
pub use matrix::RationalMatrix;
pub use psd::{ldlt_psd, PsdStatus, PsdVerdict};
pub use rational::{
    from_f64, int, parse_decimal, ratio, render_decimal, render_exact, render_f64, to_f64, Rational,
    MAX_DECIMAL_DIGITS,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LinalgError {
    #[error("malformed decimal {text:?} at offset {offset}: {reason}")]
    Parse { text: String, offset: usize, reason: String },
    #[error("dimension mismatch in {op}: {}x{} vs {}x{}", left.0, left.1, right.0, right.1)]
    Shape { op: &'static str, left: (usize, usize), right: (usize, usize) },
    #[error("{rows}x{cols} matrix needs {} entries, got {entries}", rows * cols)]
    EntryCount { rows: usize, cols: usize, entries: usize },
    #[error("row {row} has {found} entries, expected {expected}")]
    RaggedRow { row: usize, expected: usize, found: usize },
    #[error("index out of range for {}x{} matrix", shape.0, shape.1)]
    IndexOutOfRange { shape: (usize, usize) },
    #[error("matrix is not square ({}x{})", shape.0, shape.1)]
    NotSquare { shape: (usize, usize) },
    #[error("matrix is not symmetric")]
    NotSymmetric,
    #[error("matrix is singular")]
    Singular,
    #[error("matrix has NaN or infinite entries")]
    NonFinite,
    #[error("diagonal shift must be nonnegative")]
    NegativeShift,
}
