//! Exact positive-semidefiniteness decision by symmetric-pivoting LDLᵀ.

use num::{Signed, Zero};
use serde::{Deserialize, Serialize};

use super::matrix::RationalMatrix;
use super::rational::Rational;
use super::LinalgError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PsdStatus {
    ProvenPsd,
    ProvenNotPsd,
    Unknown,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PsdVerdict {
    pub status: PsdStatus,
    /// Vector `v` with `vᵀMv < 0` whenever the status is `ProvenNotPsd`.
    pub witness: Option<Vec<Rational>>,
    /// Smallest pivot encountered (exact path), or the smallest certified
    /// pivot lower bound (interval path).
    pub margin: Option<Rational>,
}

impl PsdVerdict {
    pub fn is_psd(&self) -> bool {
        self.status == PsdStatus::ProvenPsd
    }

    pub(crate) fn unknown() -> Self {
        Self { status: PsdStatus::Unknown, witness: None, margin: None }
    }
}

/// Decides `m ⪰ 0` exactly.
///
/// At each step the largest remaining diagonal entry is eliminated. A
/// negative diagonal, or a zero diagonal block with a nonzero off-diagonal
/// entry, refutes PSD and yields a witness lifted back through the
/// eliminated pivots. An all-zero residual counts as PSD.
pub fn ldlt_psd(m: &RationalMatrix) -> Result<PsdVerdict, LinalgError> {
    if !m.is_square() {
        return Err(LinalgError::NotSquare { shape: m.shape() });
    }
    if !m.is_symmetric() {
        return Err(LinalgError::NotSymmetric);
    }
    let n = m.rows();
    let mut work = m.clone();
    let mut remaining: Vec<usize> = (0..n).collect();
    // (pivot index, multipliers l[i] for the rows still remaining then)
    let mut eliminated: Vec<(usize, Vec<(usize, Rational)>)> = Vec::new();
    let mut margin: Option<Rational> = None;

    while !remaining.is_empty() {
        if let Some(&neg) = remaining.iter().find(|&&i| work[(i, i)].is_negative()) {
            let mut v = vec![Rational::zero(); n];
            v[neg] = Rational::from_integer(1.into());
            return Ok(refuted(m, v, &eliminated));
        }
        let best = remaining
            .iter()
            .copied()
            .max_by(|&a, &b| work[(a, a)].cmp(&work[(b, b)]))
            .expect("nonempty");
        if work[(best, best)].is_zero() {
            // Zero diagonal on the residual: PSD only if the residual vanishes.
            for (pos, &i) in remaining.iter().enumerate() {
                for &j in &remaining[pos + 1..] {
                    if !work[(i, j)].is_zero() {
                        let mut v = vec![Rational::zero(); n];
                        v[i] = Rational::from_integer(1.into());
                        v[j] = if work[(i, j)].is_positive() {
                            Rational::from_integer((-1).into())
                        } else {
                            Rational::from_integer(1.into())
                        };
                        return Ok(refuted(m, v, &eliminated));
                    }
                }
            }
            margin = Some(Rational::zero());
            break;
        }
        let pivot = work[(best, best)].clone();
        margin = Some(match margin {
            Some(cur) if cur < pivot => cur,
            _ => pivot.clone(),
        });
        remaining.retain(|&i| i != best);
        let mut multipliers = Vec::with_capacity(remaining.len());
        for &i in &remaining {
            let l = &work[(i, best)] / &pivot;
            if !l.is_zero() {
                for &j in &remaining {
                    let delta = &l * &work[(best, j)];
                    work[(i, j)] -= delta;
                }
            }
            multipliers.push((i, l));
        }
        eliminated.push((best, multipliers));
    }
    Ok(PsdVerdict { status: super::PsdStatus::ProvenPsd, witness: None, margin })
}

/// Lifts a residual witness through the eliminated pivots so that the
/// quadratic form of the full matrix equals that of the residual.
fn refuted(
    m: &RationalMatrix,
    mut v: Vec<Rational>,
    eliminated: &[(usize, Vec<(usize, Rational)>)],
) -> PsdVerdict {
    for (pivot, multipliers) in eliminated.iter().rev() {
        let mut acc = Rational::zero();
        for (i, l) in multipliers {
            acc += l * &v[*i];
        }
        v[*pivot] = -acc;
    }
    let value = m.quadratic_form(&v).expect("square");
    debug_assert!(value.is_negative(), "witness must certify indefiniteness");
    PsdVerdict { status: PsdStatus::ProvenNotPsd, witness: Some(v), margin: Some(value) }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::rational::parse_decimal;

    #[test]
    fn identity_is_psd_with_unit_margin() {
        let v = ldlt_psd(&RationalMatrix::identity(2)).unwrap();
        assert!(v.is_psd());
        assert_eq!(v.margin, Some(Rational::from_integer(1.into())));
    }

    #[test]
    fn indefinite_two_by_two_has_negative_witness() {
        let m = RationalMatrix::from_i64_rows(&[&[1, 2], &[2, 1]]);
        let v = ldlt_psd(&m).unwrap();
        assert_eq!(v.status, PsdStatus::ProvenNotPsd);
        let w = v.witness.unwrap();
        assert!(m.quadratic_form(&w).unwrap().is_negative());
    }

    #[test]
    fn zero_matrix_and_rank_deficient_are_psd() {
        assert!(ldlt_psd(&RationalMatrix::zeros(3, 3)).unwrap().is_psd());
        let m = RationalMatrix::from_i64_rows(&[&[1, 1], &[1, 1]]);
        let v = ldlt_psd(&m).unwrap();
        assert!(v.is_psd());
        assert_eq!(v.margin, Some(Rational::zero()));
    }

    #[test]
    fn zero_diagonal_with_coupling_is_not_psd() {
        let m = RationalMatrix::from_i64_rows(&[&[0, 3], &[3, 0]]);
        let v = ldlt_psd(&m).unwrap();
        assert_eq!(v.status, PsdStatus::ProvenNotPsd);
        assert!(m.quadratic_form(v.witness.as_ref().unwrap()).unwrap().is_negative());
    }

    #[test]
    fn non_symmetric_is_rejected() {
        let m = RationalMatrix::from_i64_rows(&[&[1, 2], &[0, 1]]);
        assert_eq!(ldlt_psd(&m).unwrap_err(), LinalgError::NotSymmetric);
    }

    #[test]
    fn generated_postcondition_does_not_fit_declared_invariant() {
        let d = |s: &str| parse_decimal(s).unwrap();
        let declared = RationalMatrix::from_rows(vec![
            vec![d("1484.8760396857954"), d("-25.780980284188082")],
            vec![d("-25.780980284188082"), d("406.11067541120576")],
        ])
        .unwrap();
        let generated = RationalMatrix::from_rows(vec![
            vec![d("3353.385756854045"), d("-36.73496680142199")],
            vec![d("-36.73496680142199"), d("406.10904154688274")],
        ])
        .unwrap();
        let v = ldlt_psd(&declared.sub(&generated).unwrap()).unwrap();
        assert_eq!(v.status, PsdStatus::ProvenNotPsd);
    }
}
