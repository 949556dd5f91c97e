//! Forward propagation of Q-form ellipsoids through the loop body.
//!
//! Three rules are used:
//!
//! * **AffineEllipsoid**: for `z := Lv` with `v` inside the support `x`,
//!   the image is `T Q Tᵀ` where `T` is the identity with the row of `z`
//!   replaced by (or, for a fresh `z`, extended with) `L` spread over `x`.
//! * **ReduceEllipsoid**: deleting a row/column projects `𝓖_Q` onto the
//!   remaining coordinates.
//! * **SProcedure**: disjoint ellipsoids `Qᵢ` with weights `λᵢ > 0`,
//!   `Σλᵢ = 1`, combine into `blockdiag(Qᵢ/λᵢ)`.
//!
//! Matrices stay in Q-form throughout and are never inverted, so
//! rank-deficient (degenerate) ellipsoids are handled like any other.

use std::collections::HashSet;

use num::{One, Signed, Zero};
use thiserror::Error;

use crate::annotation::{AnnotatedProgram, HoareTriple, Tactic};
use crate::codegen::AffineAssignment;
use crate::linalg::{render_exact, LinalgError, Rational, RationalMatrix};
use crate::spec_model::{Ellipsoid, MatrixForm};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PropagationError {
    #[error("statement {index} ({lhs}): variable {var} is not covered by any ellipsoid")]
    Uncovered { index: usize, lhs: String, var: String },
    #[error("AffineEllipsoid not applicable: {var} is outside the ellipsoid support")]
    NotApplicable { var: String },
    #[error("{var} is not in the ellipsoid support")]
    NotInSupport { var: String },
    #[error("multipliers sum to {sum}, expected 1")]
    MultiplierSum { sum: String },
    #[error("multiplier {value} is not positive")]
    MultiplierSign { value: String },
    #[error("ellipsoid supports overlap on {var}")]
    Overlap { var: String },
    #[error("statement {index} ({lhs}) has a nonzero constant term; only linear assignments propagate")]
    AffineConstant { index: usize, lhs: String },
    #[error("statement {index} overwrites {var}, which an active ellipsoid constrains, while installing an assumption")]
    AssumptionOverwrite { index: usize, var: String },
    #[error("annotated program has no inductive contract")]
    NoContract,
    #[error("state variable {var} is not constrained at the end of the body")]
    MissingState { var: String },
    #[error("ellipsoid must be in Q-form")]
    NotQForm,
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum Rule {
    AffineEllipsoid,
    ReduceEllipsoid,
    SProcedure,
}

/// How one ellipsoid was derived from others.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransformRecord {
    pub rule: Rule,
    /// Statement index the step belongs to (`stmts.len()` for the epilogue).
    pub at: usize,
    /// `T` for AffineEllipsoid, the row selection for ReduceEllipsoid.
    pub transform: Option<RationalMatrix>,
    /// `λᵢ` for SProcedure.
    pub multipliers: Vec<Rational>,
    pub in_supports: Vec<Vec<String>>,
    pub out_support: Vec<String>,
    pub pre: Vec<RationalMatrix>,
    pub post: RationalMatrix,
}

#[derive(Debug, Clone)]
pub struct Propagated {
    pub annotated: AnnotatedProgram,
    /// Ellipsoid over the contract's state variables implied at the end of the body.
    pub generated: Ellipsoid,
    pub records: Vec<TransformRecord>,
}

fn require_q(e: &Ellipsoid) -> Result<(), PropagationError> {
    if e.form != MatrixForm::Q {
        return Err(PropagationError::NotQForm);
    }
    Ok(())
}

/// Row `L` of `a` spread over `support`.
fn spread_row(a: &AffineAssignment, support: &[String]) -> Result<Vec<Rational>, PropagationError> {
    let mut row = vec![Rational::zero(); support.len()];
    for (var, c) in &a.coeffs {
        let pos = support
            .iter()
            .position(|s| s == var)
            .ok_or_else(|| PropagationError::NotApplicable { var: var.clone() })?;
        row[pos] += c;
    }
    Ok(row)
}

/// AffineEllipsoid: returns the image ellipsoid and the transform `T`.
pub fn affine_update(q: &Ellipsoid, a: &AffineAssignment) -> Result<(Ellipsoid, RationalMatrix), PropagationError> {
    require_q(q)?;
    if !a.constant.is_zero() {
        return Err(PropagationError::AffineConstant { index: 0, lhs: a.lhs.clone() });
    }
    let row = spread_row(a, &q.support)?;
    let n = q.dim();
    let (t, support) = match q.support.iter().position(|s| *s == a.lhs) {
        Some(i) => {
            let mut t = RationalMatrix::identity(n);
            for (j, v) in row.into_iter().enumerate() {
                t[(i, j)] = v;
            }
            (t, q.support.clone())
        }
        None => {
            let mut t = RationalMatrix::zeros(n + 1, n);
            for i in 0..n {
                t[(i, i)] = Rational::one();
            }
            for (j, v) in row.into_iter().enumerate() {
                t[(n, j)] = v;
            }
            let mut support = q.support.clone();
            support.push(a.lhs.clone());
            (t, support)
        }
    };
    let image = q.matrix.congruence(&t)?;
    Ok((Ellipsoid::qform(image, support), t))
}

/// Selection matrix picking `keep` (by position) out of `n` coordinates.
fn selection(n: usize, keep: &[usize]) -> RationalMatrix {
    let mut s = RationalMatrix::zeros(keep.len(), n);
    for (r, &c) in keep.iter().enumerate() {
        s[(r, c)] = Rational::one();
    }
    s
}

/// ReduceEllipsoid: delete `drop` from the support.
pub fn reduce(q: &Ellipsoid, drop: &str) -> Result<Ellipsoid, PropagationError> {
    require_q(q)?;
    let pos = q
        .support
        .iter()
        .position(|s| s == drop)
        .ok_or_else(|| PropagationError::NotInSupport { var: drop.to_string() })?;
    let keep: Vec<usize> = (0..q.dim()).filter(|&i| i != pos).collect();
    let support = keep.iter().map(|&i| q.support[i].clone()).collect();
    Ok(Ellipsoid::qform(q.matrix.principal(&keep)?, support))
}

/// SProcedure: `blockdiag(Qᵢ/λᵢ)` over the concatenated supports.
pub fn sproc_combine(parts: &[(Ellipsoid, Rational)]) -> Result<Ellipsoid, PropagationError> {
    let mut sum = Rational::zero();
    let mut seen = HashSet::new();
    for (e, lambda) in parts {
        require_q(e)?;
        if !lambda.is_positive() {
            return Err(PropagationError::MultiplierSign { value: render_exact(lambda) });
        }
        sum += lambda;
        for v in &e.support {
            if !seen.insert(v.as_str()) {
                return Err(PropagationError::Overlap { var: v.clone() });
            }
        }
    }
    if !sum.is_one() {
        return Err(PropagationError::MultiplierSum { sum: render_exact(&sum) });
    }
    let scaled: Vec<RationalMatrix> = parts.iter().map(|(e, l)| e.matrix.scale(&l.recip())).collect();
    let blocks: Vec<&RationalMatrix> = scaled.iter().collect();
    let support = parts.iter().flat_map(|(e, _)| e.support.iter().cloned()).collect();
    Ok(Ellipsoid::qform(RationalMatrix::block_diag(&blocks), support))
}

struct Active {
    fact: usize,
    /// Sum of the observer multipliers this ellipsoid derives from.
    weight: Rational,
    /// 0 for the inductive observer, 1.. for assertive ones in attachment order.
    rank: usize,
}

struct Walker {
    annotated: AnnotatedProgram,
    active: Vec<Active>,
    records: Vec<TransformRecord>,
    label_counter: Vec<usize>,
}

impl Walker {
    fn label(&mut self, at: usize) -> String {
        let k = self.label_counter[at];
        self.label_counter[at] += 1;
        format!("ellipsoid{at}_{k}")
    }

    fn ellipsoid(&self, active: usize) -> &Ellipsoid {
        self.annotated.fact(self.active[active].fact)
    }

    /// Merges the given active ellipsoids (indices into `self.active`) with
    /// an SProcedure skip placed before statement `at`; returns the new index.
    fn merge(&mut self, mut idx: Vec<usize>, at: usize) -> Result<usize, PropagationError> {
        idx.sort_by_key(|&i| self.active[i].rank);
        let total: Rational = idx.iter().map(|&i| self.active[i].weight.clone()).sum();
        let parts: Vec<(Ellipsoid, Rational)> = idx
            .iter()
            .map(|&i| (self.ellipsoid(i).clone(), &self.active[i].weight / &total))
            .collect();
        let merged = sproc_combine(&parts)?;
        let pres: Vec<usize> = idx.iter().map(|&i| self.active[i].fact).collect();
        let rank = idx.iter().map(|&i| self.active[i].rank).min().unwrap_or(0);
        self.records.push(TransformRecord {
            rule: Rule::SProcedure,
            at,
            transform: None,
            multipliers: parts.iter().map(|(_, l)| l.clone()).collect(),
            in_supports: parts.iter().map(|(e, _)| e.support.clone()).collect(),
            out_support: merged.support.clone(),
            pre: parts.iter().map(|(e, _)| e.matrix.clone()).collect(),
            post: merged.matrix.clone(),
        });
        let post = self.annotated.add_fact(merged, false);
        let label = self.label(at);
        let multipliers = parts.iter().map(|(_, l)| l.clone()).collect();
        self.annotated.triples.push(HoareTriple { label, pres, stmt: None, at, post, tactic: Tactic::SProcedure, multipliers });
        let mut remove = idx.clone();
        remove.sort_unstable_by(|a, b| b.cmp(a));
        for i in remove {
            self.active.remove(i);
        }
        self.active.push(Active { fact: post, weight: total, rank });
        Ok(self.active.len() - 1)
    }
}

/// Annotates every statement with a triple and returns the ellipsoid the
/// body establishes over the contract's state variables.
pub fn propagate(annotated: &AnnotatedProgram) -> Result<Propagated, PropagationError> {
    let contract = annotated.contract.clone().ok_or(PropagationError::NoContract)?;
    let program = annotated.program.clone();
    let n_stmts = program.stmts.len();

    let total: Rational = std::iter::once(contract.mu.clone())
        .chain(annotated.assumptions.iter().map(|a| a.mu.clone()))
        .sum();
    if !total.is_one() {
        return Err(PropagationError::MultiplierSum { sum: render_exact(&total) });
    }

    let mut w = Walker {
        annotated: annotated.clone(),
        active: vec![Active { fact: contract.body_pre, weight: contract.mu.clone(), rank: 0 }],
        records: Vec::new(),
        label_counter: vec![0; n_stmts + 1],
    };
    w.annotated.triples.clear();
    let states: HashSet<&str> = program.state_vars.iter().map(String::as_str).collect();

    for (index, stmt) in program.stmts.iter().enumerate() {
        let attached: Vec<_> = annotated.assumptions.iter().enumerate().filter(|(_, a)| a.stmt_index == index).collect();
        if !attached.is_empty() {
            if let Some(a) = w.active.iter().find(|a| w.annotated.fact(a.fact).support.contains(&stmt.lhs)) {
                let _ = a;
                return Err(PropagationError::AssumptionOverwrite { index, var: stmt.lhs.clone() });
            }
            for (k, a) in attached {
                w.active.push(Active { fact: a.fact, weight: a.mu.clone(), rank: k + 1 });
            }
            continue;
        }
        // Inputs of a multi-variable assumption computed before its attachment point.
        if annotated.assumptions.iter().any(|a| a.stmt_index > index && annotated.fact(a.fact).support.contains(&stmt.lhs)) {
            continue;
        }
        if !stmt.constant.is_zero() {
            return Err(PropagationError::AffineConstant { index, lhs: stmt.lhs.clone() });
        }
        let covered = |var: &str, w: &Walker| w.active.iter().any(|a| w.annotated.fact(a.fact).support.iter().any(|s| s == var));
        if let Some(var) = stmt.reads().find(|v| !covered(v, &w)) {
            return Err(PropagationError::Uncovered { index, lhs: stmt.lhs.clone(), var: var.to_string() });
        }
        let touched: Vec<usize> = (0..w.active.len())
            .filter(|&i| {
                let s = &w.ellipsoid(i).support;
                s.contains(&stmt.lhs) || stmt.reads().any(|r| s.iter().any(|v| v == r))
            })
            .collect();
        let target = match touched.len() {
            0 => (0..w.active.len()).min_by_key(|&i| w.active[i].rank).ok_or_else(|| PropagationError::Uncovered {
                index,
                lhs: stmt.lhs.clone(),
                var: stmt.lhs.clone(),
            })?,
            1 => touched[0],
            _ => w.merge(touched, index)?,
        };

        let pre_fact = w.active[target].fact;
        let pre = w.annotated.fact(pre_fact).clone();
        let (image, t) = affine_update(&pre, stmt)?;
        w.records.push(TransformRecord {
            rule: Rule::AffineEllipsoid,
            at: index,
            transform: Some(t),
            multipliers: Vec::new(),
            in_supports: vec![pre.support.clone()],
            out_support: image.support.clone(),
            pre: vec![pre.matrix.clone()],
            post: image.matrix.clone(),
        });
        let live = program.read_after(index);
        let keep: Vec<usize> = (0..image.dim())
            .filter(|&i| {
                let v = image.support[i].as_str();
                states.contains(v) || live.contains(v)
            })
            .collect();
        let post = if keep.len() < image.dim() {
            let sel = selection(image.dim(), &keep);
            let reduced = Ellipsoid::qform(
                image.matrix.principal(&keep)?,
                keep.iter().map(|&i| image.support[i].clone()).collect(),
            );
            w.records.push(TransformRecord {
                rule: Rule::ReduceEllipsoid,
                at: index,
                transform: Some(sel),
                multipliers: Vec::new(),
                in_supports: vec![image.support.clone()],
                out_support: reduced.support.clone(),
                pre: vec![image.matrix.clone()],
                post: reduced.matrix.clone(),
            });
            reduced
        } else {
            image
        };
        let empty = post.support.is_empty();
        let post_fact = w.annotated.add_fact(post, false);
        let label = w.label(index);
        w.annotated.triples.push(HoareTriple {
            label,
            pres: vec![pre_fact],
            stmt: Some(index),
            at: index,
            post: post_fact,
            tactic: Tactic::AffineEllipsoid,
            multipliers: Vec::new(),
        });
        if empty {
            w.active.remove(target);
        } else {
            w.active[target].fact = post_fact;
        }
    }

    // Epilogue: one ellipsoid over exactly the contract variables, in contract order.
    let wanted = w.annotated.fact(contract.post).support.clone();
    let holders: Vec<usize> = (0..w.active.len())
        .filter(|&i| w.ellipsoid(i).support.iter().any(|v| wanted.contains(v)))
        .collect();
    let holder = match holders.len() {
        0 => return Err(PropagationError::MissingState { var: wanted.first().cloned().unwrap_or_default() }),
        1 => holders[0],
        _ => w.merge(holders, n_stmts)?,
    };
    let last = w.ellipsoid(holder).clone();
    let generated = if last.support != wanted {
        let keep = wanted
            .iter()
            .map(|v| last.support.iter().position(|s| s == v).ok_or_else(|| PropagationError::MissingState { var: v.clone() }))
            .collect::<Result<Vec<_>, _>>()?;
        let sel = selection(last.dim(), &keep);
        let projected = Ellipsoid::qform(last.matrix.congruence(&sel)?, wanted.clone());
        w.records.push(TransformRecord {
            rule: Rule::ReduceEllipsoid,
            at: n_stmts,
            transform: Some(sel),
            multipliers: Vec::new(),
            in_supports: vec![last.support.clone()],
            out_support: wanted.clone(),
            pre: vec![last.matrix.clone()],
            post: projected.matrix.clone(),
        });
        let pre_fact = w.active[holder].fact;
        let post_fact = w.annotated.add_fact(projected.clone(), false);
        let label = w.label(n_stmts);
        w.annotated.triples.push(HoareTriple {
            label,
            pres: vec![pre_fact],
            stmt: None,
            at: n_stmts,
            post: post_fact,
            tactic: Tactic::AffineEllipsoid,
            multipliers: Vec::new(),
        });
        projected
    } else {
        last
    };
    Ok(Propagated { annotated: w.annotated, generated, records: w.records })
}
