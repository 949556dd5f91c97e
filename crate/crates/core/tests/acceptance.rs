//! Acceptance criteria, one PASS/FAIL line each.
//!
//! Runs without the libtest harness so the lines reach the terminal. The
//! process fails only when a criterion outside `KNOWN_UNATTAINABLE` fails, or
//! when a listed one unexpectedly starts passing (the list must then shrink).

mod common;

use std::time::{Duration, Instant};

use ellipsoid_autocode::annotation::annotate;
use ellipsoid_autocode::checker::{
    check_artifact, check_final_containment, parse_annotated_c, BodyItem, CheckOptions, Overall,
};
use ellipsoid_autocode::codegen::{emit_c, interpret, lower, matrix_name};
use ellipsoid_autocode::linalg::{
    interval_cholesky_psd, ldlt_psd, lift, parse_decimal, ratio, render_f64, to_f64, PsdStatus, Rational,
    RationalMatrix, DEFAULT_SHIFT,
};
use ellipsoid_autocode::pipeline::autocode;
use ellipsoid_autocode::propagation::{affine_update, propagate, reduce, sproc_combine, Rule};
use ellipsoid_autocode::spec_model::{schur_member, to_qform, ControllerSpec, Ellipsoid};
use ellipsoid_autocode::stability::{simulate, InputMode, StabilityCertificate};
use ellipsoid_autocode::codegen::AffineAssignment;
use nalgebra::{DMatrix, Matrix2};
use num::Zero;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::*;

/// Printed Eq. (1) with the printed observers does not satisfy the
/// invariance LMI; see the project's decision notes.
const KNOWN_UNATTAINABLE: &[&str] = &["4"];

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit: Duration) -> Result<(), String> {
    ensure(elapsed < limit, || format!("took {elapsed:?}, limit {limit:?}"))
}

fn decimals(rows: &[&[&str]]) -> RationalMatrix {
    RationalMatrix::from_rows(rows.iter().map(|r| r.iter().map(|s| parse_decimal(s).unwrap()).collect()).collect())
        .unwrap()
}

fn stability_p() -> RationalMatrix {
    decimals(&[&["6.742e-4", "4.28e-5"], &["4.28e-5", "2.4651e-3"]])
}

fn qmat_0_printed() -> [[f64; 2]; 2] {
    [[1484.8760396857954, -25.780980284188082], [-25.780980284188082, 406.11067541120576]]
}

fn criterion_1() -> Outcome {
    let p = stability_p();
    let start = Instant::now();
    let q = p.invert().map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    // Independent float oracle.
    let pf = Matrix2::new(6.742e-4, 4.28e-5, 4.28e-5, 2.4651e-3);
    let oracle = pf.try_inverse().ok_or("oracle: singular")?;
    let mut worst = 0.0f64;
    for (i, row) in qmat_0_printed().iter().enumerate() {
        for (j, &printed) in row.iter().enumerate() {
            let ours = to_f64(&q[(i, j)]);
            let rel = ((ours - printed) / printed).abs();
            let rel_oracle = ((oracle[(i, j)] - printed) / printed).abs();
            ensure(rel <= 1e-9, || format!("entry ({i},{j}): {ours} vs {printed}, rel {rel:e}"))?;
            ensure(rel_oracle <= 1e-9, || format!("oracle entry ({i},{j}) off by {rel_oracle:e}"))?;
            worst = worst.max(rel);
        }
    }
    within(elapsed, Duration::from_millis(1))?;
    Ok(format!("max rel err {worst:.1e}, {elapsed:?}"))
}

fn criterion_2() -> Outcome {
    let generated = autocode(&fixture("running_example.json")).map_err(|e| e.to_string())?;
    let merges: Vec<_> = generated.propagated.records.iter().filter(|r| r.rule == Rule::SProcedure).collect();
    ensure(merges.len() == 1, || format!("{} SProcedure merges", merges.len()))?;
    let recips: Vec<Rational> = merges[0].multipliers.iter().map(|l| l.recip()).collect();
    ensure(recips == [ratio(10000, 9991), ratio(10000, 9)], || format!("reciprocals {recips:?}"))?;
    let shown: Vec<String> = recips.iter().map(render_f64).collect();
    ensure(shown == ["1.0009008107296566", "1111.111111111111"], || format!("rendered {shown:?}"))?;
    for lit in ["(10000/9991)", "(10000/9)"] {
        ensure(generated.emitted.text.contains(lit), || format!("emitted C lacks {lit}"))?;
    }
    Ok(format!("reciprocals 10000/9991, 10000/9 rendered {}", shown.join(", ")))
}

fn criterion_3() -> Outcome {
    let start = Instant::now();
    let spec = fixture("running_example_flipped.json");
    ensure(spec.a[(0, 0)] == ratio(-499, 1000), || "fixture A11 is not -0.4990".into())?;
    let generated = autocode(&spec).map_err(|e| e.to_string())?;
    let parsed = parse_annotated_c(&generated.emitted.text).map_err(|e| e.to_string())?;
    let report = check_artifact(&parsed, CheckOptions::default());
    let unproven = report.triples.iter().filter(|t| !t.verdict.is_proven()).count();
    ensure(unproven == 0, || format!("{unproven} triples not proven"))?;
    ensure(generated.containment.status == PsdStatus::ProvenNotPsd, || "generator: containment not refuted".into())?;
    ensure(report.overall == Overall::Refuted, || format!("checker overall {:?}", report.overall))?;

    let qmat_24 = decimals(&[&["3353.385756854045", "-36.73496680142199"], &["-36.73496680142199", "406.10904154688274"]]);
    let qmat_0 = decimals(&[&["1484.8760396857954", "-25.780980284188082"], &["-25.780980284188082", "406.11067541120576"]]);
    let printed = check_final_containment(&qmat_24, &qmat_0).map_err(|e| e.to_string())?;
    ensure(printed.status == PsdStatus::ProvenNotPsd, || format!("printed QMat_24 vs QMat_0: {:?}", printed.status))?;
    within(start.elapsed(), Duration::from_secs(1))?;
    Ok(format!("{} triples proven, containment refuted, {:?}", report.triples.len(), start.elapsed()))
}

/// Largest eigenvalue of the invariance LMI, in floats, built directly from
/// the spec entries.
fn lmi_max_eigenvalue(spec: &ControllerSpec) -> f64 {
    let dense = |m: &RationalMatrix| DMatrix::from_row_slice(m.rows(), m.cols(), &m.to_f64());
    let (a, b) = (dense(&spec.a), dense(&spec.b));
    let stab = &spec.observers[0];
    let input = &spec.observers[1];
    let p = dense(&stab.matrix);
    let alpha = 1.0 - to_f64(&stab.mu);
    let weight = dense(&input.matrix).try_inverse().unwrap() * to_f64(&input.mu);
    let tl = a.transpose() * &p * &a - &p * (1.0 - alpha);
    let tr = a.transpose() * &p * &b;
    let br = b.transpose() * &p * &b - weight;
    let (n, m) = (a.nrows(), b.ncols());
    let mut lmi = DMatrix::zeros(n + m, n + m);
    lmi.view_mut((0, 0), (n, n)).copy_from(&tl);
    lmi.view_mut((0, n), (n, m)).copy_from(&tr);
    lmi.view_mut((n, 0), (m, n)).copy_from(&tr.transpose());
    lmi.view_mut((n, n), (m, m)).copy_from(&br);
    lmi.symmetric_eigenvalues().max()
}

fn verify_correct_controller(spec: &ControllerSpec) -> Outcome {
    let start = Instant::now();
    let eig = lmi_max_eigenvalue(spec);
    let generated = autocode(spec).map_err(|e| e.to_string())?;
    let parsed = parse_annotated_c(&generated.emitted.text).map_err(|e| e.to_string())?;
    let report = check_artifact(&parsed, CheckOptions::default());
    let elapsed = start.elapsed();
    ensure(eig <= 0.0, || {
        format!(
            "float oracle refutes invariance (LMI max eigenvalue {eig:.2e} > 0); checker overall {:?}, containment margin {}",
            report.overall,
            generated.containment.margin.as_ref().map_or(f64::NAN, to_f64)
        )
    })?;
    ensure(report.overall == Overall::Proven, || format!("checker overall {:?}", report.overall))?;
    within(elapsed, Duration::from_secs(5))?;
    Ok(format!("LMI max eigenvalue {eig:.2e}, overall Proven, {elapsed:?}"))
}

fn criterion_4() -> Outcome {
    let spec = fixture("running_example.json");
    ensure(spec.b[(0, 0)].is_zero() && spec.b[(1, 0)] == ratio(1, 100), || "fixture B is not the printed one".into())?;
    verify_correct_controller(&spec)
}

fn criterion_4_figure_b() -> Outcome {
    verify_correct_controller(&fixture("running_example_fig.json"))
}

fn qform_of(support: &[String], q: RationalMatrix) -> Ellipsoid {
    Ellipsoid::qform(q, support.to_vec())
}

fn names(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{prefix}{i}")).collect()
}

fn affine_soundness(rng: &mut ChaCha8Rng) -> Result<(), String> {
    let n = rng.gen_range(1..=4);
    let support = names("v", n);
    let (q, l) = random_pd(rng, n);
    let pre = qform_of(&support, q);
    let lhs = if rng.gen() { support[rng.gen_range(0..n)].clone() } else { "w".to_string() };
    let mut coeffs: Vec<(String, Rational)> = Vec::new();
    for v in &support {
        if rng.gen_ratio(2, 3) {
            coeffs.push((v.clone(), nonzero(rng)));
        }
    }
    let stmt = AffineAssignment::new(&lhs, coeffs.clone());
    let (post, _) = affine_update(&pre, &stmt).map_err(|e| e.to_string())?;
    let x = point_in(rng, &l);
    let value: Rational = coeffs.iter().map(|(v, c)| c * &x[support.iter().position(|s| s == v).unwrap()]).sum();
    let after: Vec<Rational> = post
        .support
        .iter()
        .map(|v| if *v == lhs { value.clone() } else { x[support.iter().position(|s| s == v).unwrap()].clone() })
        .collect();
    ensure(schur_member(&post.matrix, &after).unwrap(), || format!("{stmt:?} maps {x:?} outside the post-condition"))
}

fn sproc_soundness(rng: &mut ChaCha8Rng) -> Result<(), String> {
    let parts = rng.gen_range(1..=3);
    let weights: Vec<i64> = (0..parts).map(|_| rng.gen_range(1..=20)).collect();
    let total: i64 = weights.iter().sum();
    let mut inputs = Vec::new();
    let mut point = Vec::new();
    for (i, w) in weights.iter().enumerate() {
        let n = rng.gen_range(1..=3);
        let (q, l) = random_pd(rng, n);
        point.extend(point_in(rng, &l));
        inputs.push((qform_of(&names(&format!("p{i}_"), n), q), ratio(*w, total)));
    }
    let merged = sproc_combine(&inputs).map_err(|e| e.to_string())?;
    ensure(schur_member(&merged.matrix, &point).unwrap(), || format!("{point:?} outside the merged ellipsoid"))
}

fn reduce_soundness(rng: &mut ChaCha8Rng) -> Result<(), String> {
    let n = rng.gen_range(2..=5);
    let support = names("v", n);
    let (q, l) = random_pd(rng, n);
    let drop = rng.gen_range(0..n);
    let reduced = reduce(&qform_of(&support, q), &support[drop]).map_err(|e| e.to_string())?;
    let mut x = point_in(rng, &l);
    x.remove(drop);
    ensure(schur_member(&reduced.matrix, &x).unwrap(), || format!("projection {x:?} outside the reduced ellipsoid"))
}

fn ldlt_matches_minors(rng: &mut ChaCha8Rng) -> Result<(), String> {
    let n = rng.gen_range(1..=6);
    let m = random_psd_candidate(rng, n);
    let verdict = ldlt_psd(&m).map_err(|e| e.to_string())?;
    let oracle = psd_by_minors(&m);
    ensure(verdict.is_psd() == oracle, || format!("LDLT says {:?}, minors say {oracle} for {m:?}", verdict.status))?;
    if let Some(w) = &verdict.witness {
        let q = m.quadratic_form(w).unwrap();
        ensure(q < Rational::zero(), || "witness does not certify indefiniteness".into())?;
    }
    Ok(())
}

fn interval_never_overclaims(rng: &mut ChaCha8Rng) -> Result<(), String> {
    let n = rng.gen_range(1..=6);
    let m = random_psd_candidate(rng, n);
    // Nudge by a float-sized amount so cases straddle the boundary.
    let mut f = m.to_f64();
    for i in 0..n {
        f[i * n + i] += rng.gen_range(-1e-9..1e-9);
    }
    let interval = interval_cholesky_psd(n, &f, DEFAULT_SHIFT).map_err(|e| e.to_string())?;
    if interval.is_psd() {
        let exact = ldlt_psd(&lift(n, &f).unwrap()).unwrap();
        ensure(exact.is_psd(), || format!("interval claims PSD, exact refutes: {f:?}"))?;
    }
    Ok(())
}

fn criterion_5() -> Outcome {
    const INSTANCES: usize = 1000;
    let suites: [(&str, fn(&mut ChaCha8Rng) -> Result<(), String>); 5] = [
        ("a affine", affine_soundness),
        ("b sproc", sproc_soundness),
        ("c reduce", reduce_soundness),
        ("d ldlt/minors", ldlt_matches_minors),
        ("e interval", interval_never_overclaims),
    ];
    for (seed, (name, run)) in suites.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed + seed as u64);
        for i in 0..INSTANCES {
            run(&mut rng).map_err(|e| format!("({name}) instance {i}: {e}"))?;
        }
    }
    Ok(format!("5 suites x {INSTANCES} instances, 0 violations"))
}

/// `u = Cx + De`, `x₊ = Ax + Be` with `e = y − y_ref`.
fn direct(spec: &ControllerSpec, inputs: &[Rational], x: &[Rational]) -> (Vec<Rational>, Vec<Rational>) {
    let raw: std::collections::HashMap<&str, &Rational> =
        spec.io_inputs().iter().zip(inputs).map(|(n, v)| (spec_name(spec, n), v)).collect();
    let e: Vec<Rational> = spec
        .input_names
        .iter()
        .map(|y| match spec.references.get(y) {
            Some(r) => raw[y.as_str()] - raw[r.as_str()],
            None => raw[y.as_str()].clone(),
        })
        .collect();
    let lin = |m1: &RationalMatrix, m2: &RationalMatrix| -> Vec<Rational> {
        let a = m1.apply(x).unwrap();
        let b = m2.apply(&e).unwrap();
        a.into_iter().zip(b).map(|(p, q)| p + q).collect()
    };
    (lin(&spec.c, &spec.d), lin(&spec.a, &spec.b))
}

fn spec_name<'a>(spec: &'a ControllerSpec, name: &str) -> &'a str {
    spec.input_names.iter().chain(spec.references.values()).find(|n| *n == name).unwrap()
}

fn criterion_6() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for s in 0..20 {
        let spec = random_spec(&mut rng, s);
        let program = lower(&spec).map_err(|e| e.to_string())?;
        ensure(program.inputs == spec.io_inputs(), || "program input order differs from io order".into())?;
        for _ in 0..1000 {
            let inputs: Vec<Rational> = (0..program.inputs.len()).map(|_| small(&mut rng)).collect();
            let x: Vec<Rational> = (0..spec.n_states()).map(|_| small(&mut rng)).collect();
            let got = interpret(&program, &inputs, &x).map_err(|e| e.to_string())?;
            let want = direct(&spec, &inputs, &x);
            ensure(got == want, || format!("spec {s}: interpreted {got:?}, direct {want:?}"))?;
        }
    }
    Ok("20 specs x 1000 points, exact agreement".into())
}

fn criterion_7() -> Outcome {
    let spec = fixture("running_example.json");
    let cert = StabilityCertificate::from_spec(&spec).map_err(|e| e.to_string())?;
    let start = Instant::now();
    let trace = simulate(&spec, &cert, 100_000, 7, &InputMode::UniformInBound).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let again = simulate(&spec, &cert, 100_000, 7, &InputMode::UniformInBound).map_err(|e| e.to_string())?;
    ensure(trace.rows == again.rows, || "same seed, different trace".into())?;
    let p = stability_p().to_f64();
    let mut worst = 0.0f64;
    for row in &trace.rows {
        let x = &row.state;
        let level = p[0] * x[0] * x[0] + 2.0 * p[1] * x[0] * x[1] + p[3] * x[1] * x[1];
        ensure(level <= 1.0, || format!("step {}: level {level}", row.step))?;
        let y = row.input.first().copied().unwrap_or(0.0);
        ensure(y * y <= 0.5, || format!("step {}: input {y} outside the bound", row.step))?;
        worst = worst.max(level);
    }
    within(elapsed, Duration::from_secs(2))?;
    Ok(format!("100000 steps, max level {worst:.3e}, {elapsed:?}"))
}

/// `parse_annotated_c(emit_c(..))` recovers every matrix and triple.
fn round_trip(spec: &ControllerSpec) -> Result<usize, String> {
    let program = lower(spec).map_err(|e| e.to_string())?;
    let annotated = annotate(spec, program).map_err(|e| e.to_string())?;
    let propagated = propagate(&annotated).map_err(|e| e.to_string())?.annotated;
    let text = emit_c(&propagated).text;
    let parsed = parse_annotated_c(&text).map_err(|e| e.to_string())?;

    for (name, m) in &parsed.matrices {
        let k: usize = name.strip_prefix("QMat_").and_then(|s| s.parse().ok()).ok_or(format!("odd name {name}"))?;
        let fact = to_qform(propagated.fact(k)).map_err(|e| e.to_string())?;
        ensure(&fact.matrix == m, || format!("{}: {name} differs", spec.name))?;
    }
    let mut expected = propagated.triples.clone();
    expected.sort_by_key(|t| (t.at, t.stmt.is_some()));
    let got: Vec<_> = parsed.triples().collect();
    ensure(got.len() == expected.len(), || format!("{}: {} triples, expected {}", spec.name, got.len(), expected.len()))?;
    for (p, t) in got.iter().zip(&expected) {
        let ctx = || format!("{}: triple {}", spec.name, t.label);
        ensure(p.label == t.label && p.tactic == t.tactic, ctx)?;
        let mut pres: Vec<&str> = p.requires.iter().chain(&p.assumes).map(|q| q.matrix.as_str()).collect();
        let mut want: Vec<String> = t.pres.iter().map(|&i| matrix_name(i)).collect();
        pres.sort_unstable();
        want.sort_unstable();
        ensure(pres == want, ctx)?;
        for pred in p.requires.iter().chain(&p.assumes).chain(std::iter::once(&p.ensures)) {
            let k: usize = pred.matrix["QMat_".len()..].parse().unwrap();
            ensure(pred.vars == propagated.fact(k).support, ctx)?;
            ensure(parsed.matrices.contains_key(&pred.matrix), ctx)?;
        }
        ensure(p.ensures.matrix == matrix_name(t.post), ctx)?;
        ensure(p.stmt.as_ref() == t.stmt.map(|i| &propagated.program.stmts[i]), ctx)?;
    }
    let bare = parsed.body.iter().filter(|b| matches!(b, BodyItem::Statement { .. })).count();
    ensure(parsed.statements().len() == propagated.program.stmts.len(), || {
        format!("{}: {} statements ({bare} bare)", spec.name, parsed.statements().len())
    })?;
    ensure(parsed.statements().into_iter().eq(propagated.program.stmts.iter()), || format!("{}: statements differ", spec.name))?;
    Ok(parsed.matrices.len())
}

fn criterion_8() -> Outcome {
    let mut matrices = round_trip(&fixture("running_example.json"))?;
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for s in 0..20 {
        matrices += round_trip(&random_spec(&mut rng, s))?;
    }
    Ok(format!("running example + 20 random specs, {matrices} matrices recovered"))
}

fn main() {
    let criteria: [(&str, &str, fn() -> Outcome); 9] = [
        ("1", "Q-form golden value", criterion_1),
        ("2", "SProcedure golden scalars", criterion_2),
        ("3", "injected-error detection", criterion_3),
        ("4", "correct-controller verification (printed B)", criterion_4),
        ("4+", "correct-controller verification (figure-implied B, supplementary)", criterion_4_figure_b),
        ("5", "rule soundness suites", criterion_5),
        ("6", "semantic preservation", criterion_6),
        ("7", "simulation invariance", criterion_7),
        ("8", "round-trip", criterion_8),
    ];
    let mut unexpected = Vec::new();
    for (id, title, run) in criteria {
        let outcome = run();
        let known = KNOWN_UNATTAINABLE.contains(&id);
        match &outcome {
            Ok(detail) => println!("PASS criterion {id}: {title} -- {detail}"),
            Err(detail) => println!("FAIL criterion {id}: {title} -- {detail}{}", if known { " [known]" } else { "" }),
        }
        if outcome.is_ok() == known {
            unexpected.push(id);
        }
    }
    if !unexpected.is_empty() {
        eprintln!("unexpected outcome for criteria {unexpected:?}");
        std::process::exit(1);
    }
}
