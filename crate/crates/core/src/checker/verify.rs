//! Re-derivation of every triple from the parsed text alone.

use std::collections::HashSet;

use num::{One, Signed, Zero};
use serde::Serialize;

use super::parser::{BodyItem, ParsedArtifact, ParsedTriple, Predicate};
use crate::annotation::Tactic;
use crate::codegen::AffineAssignment;
use crate::linalg::{interval_cholesky_psd, ldlt_psd, render_exact, LinalgError, PsdStatus, PsdVerdict, Rational, RationalMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Verdict {
    Proven,
    /// Post-condition is implied by, but not equal to, the exact image.
    ProvenByContainment,
    Refuted,
    Unknown,
}

impl Verdict {
    pub fn is_proven(self) -> bool {
        matches!(self, Verdict::Proven | Verdict::ProvenByContainment)
    }
}

/// An ellipsoid `𝓖_Q` over named variables.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Claim<'a> {
    pub q: &'a RationalMatrix,
    pub vars: &'a [String],
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TripleOutcome {
    pub verdict: Verdict,
    pub detail: String,
    /// Entries `(i, j)` where the post matrix differs from the reconstruction.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub discrepancy: Vec<[usize; 2]>,
}

impl TripleOutcome {
    fn refuted(detail: impl Into<String>) -> Self {
        Self { verdict: Verdict::Refuted, detail: detail.into(), discrepancy: Vec::new() }
    }

    fn proven(verdict: Verdict, detail: impl Into<String>) -> Self {
        Self { verdict, detail: detail.into(), discrepancy: Vec::new() }
    }
}

/// Image map `M` with `post = M·pre` for `stmt` (or the identity/selection
/// for a skip).
fn reconstruct(pre: &[String], stmt: Option<&AffineAssignment>, post: &[String]) -> Result<RationalMatrix, String> {
    if let Some(s) = stmt {
        if !s.constant.is_zero() {
            return Err(format!("statement assigning {} has a constant term", s.lhs));
        }
        if let Some((v, _)) = s.coeffs.iter().find(|(v, _)| !pre.contains(v)) {
            return Err(format!("support mismatch: {v} is read by the statement but absent from the pre-condition"));
        }
    }
    let mut m = RationalMatrix::zeros(post.len(), pre.len());
    for (r, v) in post.iter().enumerate() {
        match stmt {
            Some(s) if s.lhs == *v => {
                for (var, c) in &s.coeffs {
                    let j = pre.iter().position(|p| p == var).expect("checked above");
                    m[(r, j)] += c;
                }
            }
            _ => {
                let j = pre
                    .iter()
                    .position(|p| p == v)
                    .ok_or_else(|| format!("support mismatch: {v} is in the post-condition but neither in the pre-condition nor assigned"))?;
                m[(r, j)] = Rational::one();
            }
        }
    }
    Ok(m)
}

/// AffineEllipsoid: `M·Q_pre·Mᵀ` must equal `Q_post` (or, failing that, be
/// contained in it).
pub fn check_affine_triple(pre: &Claim<'_>, stmt: Option<&AffineAssignment>, post: &Claim<'_>) -> TripleOutcome {
    let m = match reconstruct(pre.vars, stmt, post.vars) {
        Ok(m) => m,
        Err(e) => return TripleOutcome::refuted(e),
    };
    let image = match pre.q.congruence(&m) {
        Ok(q) => q,
        Err(e) => return TripleOutcome::refuted(e.to_string()),
    };
    if &image == post.q {
        return TripleOutcome::proven(Verdict::Proven, "post-condition equals M·Q·Mᵀ");
    }
    let discrepancy: Vec<[usize; 2]> = (0..image.rows())
        .flat_map(|i| (0..image.cols()).map(move |j| [i, j]))
        .filter(|&[i, j]| image[(i, j)] != post.q[(i, j)])
        .collect();
    let diff = post.q.sub(&image).expect("same shape");
    match ldlt_psd(&diff) {
        Ok(v) if v.is_psd() => TripleOutcome::proven(Verdict::ProvenByContainment, "post-condition contains M·Q·Mᵀ"),
        _ => {
            let [i, j] = discrepancy[0];
            TripleOutcome {
                verdict: Verdict::Refuted,
                detail: format!(
                    "entry ({i},{j}): expected {}, found {} ({} entries differ)",
                    render_exact(&image[(i, j)]),
                    render_exact(&post.q[(i, j)]),
                    discrepancy.len()
                ),
                discrepancy,
            }
        }
    }
}

/// SProcedure: the post matrix must be `blockdiag(Qᵢ/λᵢ)` over the
/// concatenated supports with `λᵢ > 0`, `Σλᵢ = 1`.
pub fn check_sproc_triple(pres: &[Claim<'_>], stmt: Option<&AffineAssignment>, post: &Claim<'_>) -> TripleOutcome {
    if pres.len() < 2 {
        return TripleOutcome::refuted(format!("SProcedure needs at least two pre-conditions, found {}", pres.len()));
    }
    if let Some(s) = stmt {
        return TripleOutcome::refuted(format!("SProcedure applies to an empty block, found an assignment to {}", s.lhs));
    }
    let concat: Vec<&String> = pres.iter().flat_map(|p| p.vars.iter()).collect();
    if concat.len() != post.vars.len() || concat.iter().zip(post.vars).any(|(a, b)| *a != b) {
        return TripleOutcome::refuted("post support is not the concatenation of the pre supports");
    }
    let mut seen = HashSet::new();
    if let Some(v) = concat.iter().find(|v| !seen.insert(v.as_str())) {
        return TripleOutcome::refuted(format!("pre supports overlap on {v}"));
    }
    let mut offsets = Vec::with_capacity(pres.len());
    let mut at = 0;
    for p in pres {
        offsets.push(at);
        at += p.vars.len();
    }
    let block_of = |i: usize| offsets.iter().rposition(|&o| o <= i).expect("offset 0 exists");
    for i in 0..at {
        for j in 0..at {
            if block_of(i) != block_of(j) && !post.q[(i, j)].is_zero() {
                return TripleOutcome {
                    verdict: Verdict::Refuted,
                    detail: format!("off-diagonal block entry ({i},{j}) is nonzero"),
                    discrepancy: vec![[i, j]],
                };
            }
        }
    }
    // λ per block, `None` when the pre block is zero (any λ fits).
    let mut lambdas: Vec<Option<Rational>> = Vec::with_capacity(pres.len());
    for (b, p) in pres.iter().enumerate() {
        let o = offsets[b];
        let n = p.vars.len();
        let mut lambda: Option<Rational> = None;
        for i in 0..n {
            for j in 0..n {
                let (q, r) = (&p.q[(i, j)], &post.q[(o + i, o + j)]);
                if q.is_zero() && r.is_zero() {
                    continue;
                }
                if q.is_zero() || r.is_zero() {
                    return TripleOutcome {
                        verdict: Verdict::Refuted,
                        detail: format!("block {b}: entry ({i},{j}) is not a multiple of the pre-condition"),
                        discrepancy: vec![[o + i, o + j]],
                    };
                }
                let l = q / r;
                match &lambda {
                    None => lambda = Some(l),
                    Some(prev) if *prev != l => {
                        return TripleOutcome {
                            verdict: Verdict::Refuted,
                            detail: format!("block {b}: inconsistent multiplier at entry ({i},{j})"),
                            discrepancy: vec![[o + i, o + j]],
                        };
                    }
                    Some(_) => {}
                }
            }
        }
        lambdas.push(lambda);
    }
    let fixed: Rational = lambdas.iter().flatten().sum();
    let free = lambdas.iter().filter(|l| l.is_none()).count();
    if let Some(l) = lambdas.iter().flatten().find(|l| !l.is_positive()) {
        return TripleOutcome::refuted(format!("multiplier {} is not positive", render_exact(l)));
    }
    let ok = if free == 0 { fixed.is_one() } else { fixed < Rational::one() };
    let shown: Vec<String> = lambdas.iter().map(|l| l.as_ref().map_or("free".to_string(), render_exact)).collect();
    if !ok {
        return TripleOutcome::refuted(format!("multipliers ({}) do not sum to 1", shown.join(", ")));
    }
    TripleOutcome::proven(Verdict::Proven, format!("lambda = ({})", shown.join(", ")))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContainmentCheck {
    /// Exact verdict on `Q_declared − Q_generated ⪰ 0`.
    pub exact: PsdVerdict,
    /// Interval Cholesky on the float rendering, shifted by `ε`.
    pub interval: PsdVerdict,
}

/// `𝓖_{Q_gen} ⊆ 𝓖_{Q_decl}` iff `Q_decl − Q_gen ⪰ 0`.
pub fn check_final_containment(generated: &RationalMatrix, declared: &RationalMatrix) -> Result<PsdVerdict, LinalgError> {
    ldlt_psd(&declared.sub(generated)?)
}

pub fn check_final_containment_with_interval(
    generated: &RationalMatrix,
    declared: &RationalMatrix,
    epsilon: f64,
) -> Result<ContainmentCheck, LinalgError> {
    let diff = declared.sub(generated)?;
    let exact = ldlt_psd(&diff)?;
    let interval = interval_cholesky_psd(diff.rows(), &diff.to_f64(), epsilon)?;
    Ok(ContainmentCheck { exact, interval })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Overall {
    Proven,
    Refuted,
    Unknown,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TripleReport {
    pub label: String,
    pub rule: Tactic,
    pub verdict: Verdict,
    pub detail: String,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub discrepancy: Vec<[usize; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContainmentReport {
    /// `ProvenPsd` means the generated ellipsoid lies inside the declared one.
    pub verdict: PsdStatus,
    pub margin: Option<String>,
    pub generated: Option<String>,
    pub declared: Option<String>,
    pub interval_cross_check: PsdStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<Vec<String>>,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LmiReport {
    pub verdict: PsdStatus,
    pub margin: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerificationReport {
    pub overall: Overall,
    pub triples: Vec<TripleReport>,
    pub final_containment: ContainmentReport,
    /// Predicates taken as hypotheses: the function pre-condition and input assumptions.
    pub assumptions: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lmi_check: Option<LmiReport>,
    pub epsilon: f64,
    pub fail_on_unknown: bool,
    pub tool_version: String,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CheckOptions {
    /// Shift used by the interval cross-check of the final containment.
    pub epsilon: f64,
    /// Treat an inconclusive interval cross-check as an inconclusive result.
    pub fail_on_unknown: bool,
}

impl Default for CheckOptions {
    fn default() -> Self {
        Self { epsilon: crate::linalg::DEFAULT_SHIFT, fail_on_unknown: false }
    }
}

struct Known {
    matrix: String,
    vars: Vec<String>,
}

fn describe(p: &Predicate) -> String {
    format!("in_ellipsoidQ({},({}))", p.matrix, p.vars.join(","))
}

/// Checks every triple in program order and then the final containment.
///
/// A fact is available to later triples only if it was stated as a
/// hypothesis or ensured by a proven triple, and no later assignment has
/// touched one of its variables. Pre-conditions are matched by matrix value
/// and variable list, not by name.
pub fn check_artifact(parsed: &ParsedArtifact, options: CheckOptions) -> VerificationReport {
    let mut known: Vec<Known> = Vec::new();
    let mut assumptions = Vec::new();
    let mut input_derived: HashSet<String> = HashSet::new();
    let mut triples = Vec::new();
    let io: HashSet<&str> = parsed.io_fields.iter().map(String::as_str).collect();

    if let Some(c) = &parsed.contract {
        for p in &c.requires {
            assumptions.push(describe(p));
            known.push(Known { matrix: p.matrix.clone(), vars: p.vars.clone() });
        }
    }
    let established = |known: &[Known], p: &Predicate| {
        known.iter().any(|k| k.vars == p.vars && parsed.matrix(&k.matrix) == parsed.matrix(&p.matrix))
    };
    // Assumptions may only constrain values computed from the raw inputs as
    // they were on entry, so a run cannot assume something about its state.
    let mut written: HashSet<String> = HashSet::new();
    let mut assign = |known: &mut Vec<Known>, input_derived: &mut HashSet<String>, s: &AffineAssignment| {
        known.retain(|k| !k.vars.contains(&s.lhs));
        let from_inputs = s.reads().all(|v| (io.contains(v) && !written.contains(v)) || input_derived.contains(v));
        written.insert(s.lhs.clone());
        if from_inputs && !parsed.state_fields.contains(&s.lhs) {
            input_derived.insert(s.lhs.clone());
        } else {
            input_derived.remove(&s.lhs);
        }
    };

    for item in &parsed.body {
        let t: &ParsedTriple = match item {
            BodyItem::Statement { stmt, .. } => {
                assign(&mut known, &mut input_derived, stmt);
                continue;
            }
            BodyItem::Triple(t) => t,
        };
        let mut outcome = None;
        for a in &t.assumes {
            if let Some(v) = a.vars.iter().find(|v| !input_derived.contains(*v)) {
                outcome = Some(TripleOutcome::refuted(format!(
                    "assumption over {v}, which is not computed from inputs alone"
                )));
                break;
            }
        }
        if outcome.is_none() {
            if let Some(p) = t.requires.iter().find(|p| !established(&known, p)) {
                outcome = Some(TripleOutcome {
                    verdict: Verdict::Unknown,
                    detail: format!("pre-condition {} (line {}) is not established at this point", p.matrix, p.line),
                    discrepancy: Vec::new(),
                });
            }
        }
        let outcome = outcome.unwrap_or_else(|| {
            let pres: Vec<Claim<'_>> = t
                .assumes
                .iter()
                .chain(&t.requires)
                .map(|p| Claim { q: parsed.matrix(&p.matrix), vars: &p.vars })
                .collect();
            // Block order is the textual order of the clauses.
            let pres = order_pres(t, pres);
            let post = Claim { q: parsed.matrix(&t.ensures.matrix), vars: &t.ensures.vars };
            match t.tactic {
                Tactic::AffineEllipsoid if pres.len() == 1 => check_affine_triple(&pres[0], t.stmt.as_ref(), &post),
                Tactic::AffineEllipsoid => {
                    TripleOutcome::refuted(format!("AffineEllipsoid needs exactly one pre-condition, found {}", pres.len()))
                }
                Tactic::SProcedure => check_sproc_triple(&pres, t.stmt.as_ref(), &post),
            }
        });
        for a in &t.assumes {
            assumptions.push(describe(a));
        }
        if let Some(s) = &t.stmt {
            assign(&mut known, &mut input_derived, s);
        }
        if outcome.verdict.is_proven() {
            known.push(Known { matrix: t.ensures.matrix.clone(), vars: t.ensures.vars.clone() });
        }
        triples.push(TripleReport {
            label: t.label.clone(),
            rule: t.tactic,
            verdict: outcome.verdict,
            detail: outcome.detail,
            discrepancy: outcome.discrepancy,
        });
    }

    let final_containment = final_step(parsed, &known, options);
    let all_proven = triples.iter().all(|t| t.verdict.is_proven());
    let any_refuted = triples.iter().any(|t| t.verdict == Verdict::Refuted);
    let interval_ok = !options.fail_on_unknown || final_containment.interval_cross_check == PsdStatus::ProvenPsd;
    let overall = if any_refuted || final_containment.verdict == PsdStatus::ProvenNotPsd {
        Overall::Refuted
    } else if all_proven && final_containment.verdict == PsdStatus::ProvenPsd && interval_ok {
        Overall::Proven
    } else {
        Overall::Unknown
    };
    VerificationReport {
        overall,
        triples,
        final_containment,
        assumptions,
        lmi_check: None,
        epsilon: options.epsilon,
        fail_on_unknown: options.fail_on_unknown,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
    }
}

/// Pre-conditions sorted by source line, stable for equal lines.
fn order_pres<'a>(t: &ParsedTriple, pres: Vec<Claim<'a>>) -> Vec<Claim<'a>> {
    let lines: Vec<usize> = t.assumes.iter().chain(&t.requires).map(|p| p.line).collect();
    let mut idx: Vec<usize> = (0..pres.len()).collect();
    idx.sort_by_key(|&i| lines[i]);
    idx.into_iter().map(|i| pres[i].clone()).collect()
}

fn final_step(parsed: &ParsedArtifact, known: &[Known], options: CheckOptions) -> ContainmentReport {
    let unknown = |detail: String| ContainmentReport {
        verdict: PsdStatus::Unknown,
        margin: None,
        generated: None,
        declared: None,
        interval_cross_check: PsdStatus::Unknown,
        witness: None,
        detail,
    };
    let Some(contract) = &parsed.contract else {
        return unknown("no function contract".into());
    };
    let declared = match contract.ensures.as_slice() {
        [one] => one,
        [] => return unknown("function contract has no ensures clause".into()),
        _ => return unknown("function contract has several ensures clauses".into()),
    };
    let Some(generated) = known.iter().rev().find(|k| k.vars == declared.vars) else {
        return unknown(format!(
            "no ellipsoid over ({}) is established at the end of the body",
            declared.vars.join(",")
        ));
    };
    match check_final_containment_with_interval(parsed.matrix(&generated.matrix), parsed.matrix(&declared.matrix), options.epsilon) {
        Ok(c) => ContainmentReport {
            verdict: c.exact.status,
            margin: c.exact.margin.as_ref().map(render_exact),
            generated: Some(generated.matrix.clone()),
            declared: Some(declared.matrix.clone()),
            interval_cross_check: c.interval.status,
            witness: c.exact.witness.as_ref().map(|w| w.iter().map(render_exact).collect()),
            detail: match c.exact.status {
                PsdStatus::ProvenPsd => format!("{} implies {}", generated.matrix, declared.matrix),
                _ => format!("{} does not imply {}", generated.matrix, declared.matrix),
            },
        },
        Err(e) => unknown(e.to_string()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{int, ratio};

    fn names(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn gain_triple_proven_and_perturbation_localised() {
        // QMat_4-like pre over (Int1, Int2, Integrator_1), C11 := 564.48·Integrator_1.
        let pre_q = RationalMatrix::from_rows(vec![
            vec![ratio(3, 2), ratio(-1, 4), int(1)],
            vec![ratio(-1, 4), int(2), int(0)],
            vec![int(1), int(0), int(3)],
        ])
        .unwrap();
        let pre_v = names(&["Int1", "Int2", "Integrator_1"]);
        let post_v = names(&["Int1", "Int2", "Integrator_1", "C11"]);
        let stmt = AffineAssignment::new("C11", vec![("Integrator_1".into(), ratio(14112, 25))]);
        let mut m = RationalMatrix::zeros(4, 3);
        for i in 0..3 {
            m[(i, i)] = int(1);
        }
        m[(3, 2)] = ratio(14112, 25);
        let post_q = pre_q.congruence(&m).unwrap();
        let pre = Claim { q: &pre_q, vars: &pre_v };
        let ok = check_affine_triple(&pre, Some(&stmt), &Claim { q: &post_q, vars: &post_v });
        assert_eq!(ok.verdict, Verdict::Proven);

        let mut bad = post_q.clone();
        bad[(0, 1)] += ratio(1, 1_000_000_000);
        bad[(1, 0)] += ratio(1, 1_000_000_000);
        let r = check_affine_triple(&pre, Some(&stmt), &Claim { q: &bad, vars: &post_v });
        assert_eq!(r.verdict, Verdict::Refuted);
        assert_eq!(r.discrepancy, vec![[0, 1], [1, 0]]);
    }

    #[test]
    fn identity_and_containment_fallback() {
        let q = RationalMatrix::diagonal(&[int(2), int(3)]);
        let v = names(&["x", "y"]);
        let id = AffineAssignment::copy("x", "x");
        assert_eq!(check_affine_triple(&Claim { q: &q, vars: &v }, Some(&id), &Claim { q: &q, vars: &v }).verdict, Verdict::Proven);
        let bigger = RationalMatrix::diagonal(&[int(3), int(3)]);
        let r = check_affine_triple(&Claim { q: &q, vars: &v }, Some(&id), &Claim { q: &bigger, vars: &v });
        assert_eq!(r.verdict, Verdict::ProvenByContainment);
        let smaller = RationalMatrix::diagonal(&[int(1), int(3)]);
        let r = check_affine_triple(&Claim { q: &q, vars: &v }, Some(&id), &Claim { q: &smaller, vars: &v });
        assert_eq!(r.verdict, Verdict::Refuted);
    }

    #[test]
    fn support_mismatch_is_diagnosed() {
        let q = RationalMatrix::identity(1);
        let v = names(&["x"]);
        let s = AffineAssignment::copy("z", "w");
        let r = check_affine_triple(&Claim { q: &q, vars: &v }, Some(&s), &Claim { q: &q, vars: &names(&["z"]) });
        assert_eq!(r.verdict, Verdict::Refuted);
        assert!(r.detail.contains("w"), "{}", r.detail);
    }

    #[test]
    fn sproc_figure_multipliers() {
        let a = RationalMatrix::from_i64_rows(&[&[3, 1], &[1, 2]]);
        let b = RationalMatrix::diagonal(&[ratio(1, 2)]);
        let post = RationalMatrix::block_diag(&[&a.scale(&ratio(10000, 9991)), &b.scale(&ratio(10000, 9))]);
        let (va, vb, vp) = (names(&["p", "q"]), names(&["s"]), names(&["p", "q", "s"]));
        let pres = [Claim { q: &a, vars: &va }, Claim { q: &b, vars: &vb }];
        let r = check_sproc_triple(&pres, None, &Claim { q: &post, vars: &vp });
        assert_eq!(r.verdict, Verdict::Proven);
        assert_eq!(r.detail, "lambda = (0.9991, 0.0009)");

        let wrong = RationalMatrix::block_diag(&[&a.scale(&int(2)), &b.scale(&int(3))]);
        let r = check_sproc_triple(&pres, None, &Claim { q: &wrong, vars: &vp });
        assert_eq!(r.verdict, Verdict::Refuted);
        assert!(r.detail.contains("0.5, (1/3)"), "{}", r.detail);

        let r = check_sproc_triple(&pres[..1], None, &Claim { q: &a, vars: &va });
        assert!(r.detail.contains("at least two"));
        let s = AffineAssignment::copy("p", "q");
        assert_eq!(check_sproc_triple(&pres, Some(&s), &Claim { q: &post, vars: &vp }).verdict, Verdict::Refuted);
    }

    #[test]
    fn final_containment_examples() {
        let q = RationalMatrix::from_i64_rows(&[&[2, 1], &[1, 2]]);
        assert_eq!(check_final_containment(&q, &q).unwrap().status, PsdStatus::ProvenPsd);
        let shrunk = q.scale(&ratio(9, 10));
        assert_eq!(check_final_containment(&shrunk, &q).unwrap().status, PsdStatus::ProvenPsd);
        assert_eq!(check_final_containment(&q, &shrunk).unwrap().status, PsdStatus::ProvenNotPsd);
    }
}
