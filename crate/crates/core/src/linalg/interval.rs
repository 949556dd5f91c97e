//! Interval Cholesky for float matrices.
//!
//! Every operation is computed in round-to-nearest and then widened by one
//! ulp on each side, which encloses the exact result. A factorization whose
//! pivots all have strictly positive lower bounds proves that every matrix
//! in the enclosure, in particular `M - shift·I`, is positive definite.

use super::matrix::RationalMatrix;
use super::psd::{PsdStatus, PsdVerdict};
use super::rational::{from_f64, Rational};
use super::LinalgError;

/// Default diagonal shift `2⁻³⁰`.
pub const DEFAULT_SHIFT: f64 = 1.0 / (1u64 << 30) as f64;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn point(v: f64) -> Self {
        Self { lo: v, hi: v }
    }

    fn widen(lo: f64, hi: f64) -> Self {
        Self { lo: lo.next_down(), hi: hi.next_up() }
    }

    pub fn add(self, o: Self) -> Self {
        Self::widen(self.lo + o.lo, self.hi + o.hi)
    }

    pub fn sub(self, o: Self) -> Self {
        Self::widen(self.lo - o.hi, self.hi - o.lo)
    }

    pub fn mul(self, o: Self) -> Self {
        let c = [self.lo * o.lo, self.lo * o.hi, self.hi * o.lo, self.hi * o.hi];
        let lo = c.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = c.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Self::widen(lo, hi)
    }

    /// Division by an interval with strictly positive lower bound.
    pub fn div_positive(self, o: Self) -> Self {
        debug_assert!(o.lo > 0.0);
        let c = [self.lo / o.lo, self.lo / o.hi, self.hi / o.lo, self.hi / o.hi];
        let lo = c.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = c.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Self::widen(lo, hi)
    }

    pub fn sqrt_positive(self) -> Self {
        debug_assert!(self.lo > 0.0);
        Self::widen(self.lo.sqrt(), self.hi.sqrt())
    }
}

/// Attempts to certify `m - shift·I ⪰ 0` for a row-major `n×n` float matrix.
///
/// Never answers `ProvenPsd` falsely. `ProvenNotPsd` is only returned when a
/// shifted diagonal entry is certainly negative, with the corresponding unit
/// vector as witness.
pub fn interval_cholesky_psd(n: usize, m: &[f64], shift: f64) -> Result<PsdVerdict, LinalgError> {
    if m.len() != n * n {
        return Err(LinalgError::EntryCount { rows: n, cols: n, entries: m.len() });
    }
    if m.iter().any(|v| !v.is_finite()) || !shift.is_finite() {
        return Err(LinalgError::NonFinite);
    }
    if shift < 0.0 {
        return Err(LinalgError::NegativeShift);
    }
    for i in 0..n {
        for j in 0..i {
            if m[i * n + j] != m[j * n + i] {
                return Err(LinalgError::NotSymmetric);
            }
        }
    }
    let shifted = |i: usize, j: usize| -> Interval {
        let v = Interval::point(m[i * n + j]);
        if i == j {
            v.sub(Interval::point(shift))
        } else {
            v
        }
    };
    for i in 0..n {
        if shifted(i, i).hi < 0.0 {
            let mut w = vec![Rational::from_integer(0.into()); n];
            w[i] = Rational::from_integer(1.into());
            return Ok(PsdVerdict { status: PsdStatus::ProvenNotPsd, witness: Some(w), margin: None });
        }
    }

    let mut l = vec![Interval::point(0.0); n * n];
    let mut min_pivot = f64::INFINITY;
    for j in 0..n {
        let mut d = shifted(j, j);
        for k in 0..j {
            d = d.sub(l[j * n + k].mul(l[j * n + k]));
        }
        if !(d.lo > 0.0) {
            return Ok(PsdVerdict::unknown());
        }
        min_pivot = min_pivot.min(d.lo);
        let ljj = d.sqrt_positive();
        l[j * n + j] = ljj;
        for i in j + 1..n {
            let mut s = shifted(i, j);
            for k in 0..j {
                s = s.sub(l[i * n + k].mul(l[j * n + k]));
            }
            l[i * n + j] = s.div_positive(ljj);
        }
    }
    Ok(PsdVerdict {
        status: PsdStatus::ProvenPsd,
        witness: None,
        margin: if n == 0 { None } else { from_f64(min_pivot) },
    })
}

/// Exact rational lift of a float matrix (used to cross-check the interval path).
pub fn lift(n: usize, m: &[f64]) -> Result<RationalMatrix, LinalgError> {
    let data = m.iter().map(|&v| from_f64(v).ok_or(LinalgError::NonFinite)).collect::<Result<Vec<_>, _>>()?;
    RationalMatrix::from_vec(n, n, data)
}
