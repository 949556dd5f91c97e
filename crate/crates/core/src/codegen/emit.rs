//! C text with ACSL-subset annotations.
//!
//! Every ellipsoid fact `k` is published as `logic matrix QMat_k`, right
//! before the first annotation that mentions it. Entries use the exact
//! decimal when one with ≤ 17 significant digits exists, else `(num/den)`.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use num::{One, Signed, Zero};

use super::ir::{AffineAssignment, StraightLineProgram, VarKind};
use crate::annotation::{AnnotatedProgram, HoareTriple, Tactic};
use crate::linalg::{render_decimal, render_exact, Rational, RationalMatrix};

/// Emitted source plus the names of matrices that needed fraction literals.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EmittedC {
    pub text: String,
    pub fraction_literals: Vec<String>,
}

pub fn matrix_name(fact: usize) -> String {
    format!("QMat_{fact}")
}

/// How `var` is spelled in C and ACSL text.
pub fn c_lvalue(program: &StraightLineProgram, var: &str) -> String {
    match program.kind_of(var) {
        Some(VarKind::State) => format!("_state_->{var}"),
        Some(VarKind::Input | VarKind::Output) => format!("_io_->{var}"),
        _ => var.to_string(),
    }
}

/// Literal usable in C: fractions become `(n.0/d.0)` to avoid integer division.
fn c_literal(r: &Rational) -> String {
    match render_decimal(r) {
        Some(s) => s,
        None => format!("({}.0/{}.0)", r.numer(), r.denom()),
    }
}

pub fn render_statement(program: &StraightLineProgram, s: &AffineAssignment) -> String {
    let mut rhs = String::new();
    for (var, c) in &s.coeffs {
        let name = c_lvalue(program, var);
        let neg = c.is_negative();
        let mag = c.abs();
        let term = if mag.is_one() { name } else { format!("{} * {name}", c_literal(&mag)) };
        if rhs.is_empty() {
            rhs = if neg { format!("-{term}") } else { term };
        } else {
            let _ = write!(rhs, " {} {term}", if neg { '-' } else { '+' });
        }
    }
    if !s.constant.is_zero() || rhs.is_empty() {
        let c = &s.constant;
        if rhs.is_empty() {
            rhs = if c.is_negative() { format!("-{}", c_literal(&c.abs())) } else { c_literal(c) };
        } else {
            let _ = write!(rhs, " {} {}", if c.is_negative() { '-' } else { '+' }, c_literal(&c.abs()));
        }
    }
    format!("{} = {rhs};", c_lvalue(program, &s.lhs))
}

fn matrix_literal(m: &RationalMatrix, fractions: &mut bool) -> String {
    let entries: Vec<String> = m
        .entries()
        .iter()
        .map(|e| {
            let s = render_exact(e);
            if s.contains('/') {
                *fractions = true;
            }
            s
        })
        .collect();
    format!("mat_of_{}x{}_scalar({})", m.rows(), m.cols(), entries.join(","))
}

struct Emitter<'a> {
    a: &'a AnnotatedProgram,
    out: String,
    published: BTreeSet<usize>,
    fraction_literals: Vec<String>,
}

impl Emitter<'_> {
    fn predicate(&self, fact: usize) -> String {
        let e = self.a.fact(fact);
        let vars: Vec<String> = e.support.iter().map(|v| c_lvalue(&self.a.program, v)).collect();
        format!("in_ellipsoidQ({},vect_of_{}_scalar({}))", matrix_name(fact), vars.len(), vars.join(","))
    }

    fn publish_literal(&mut self, fact: usize, indent: &str) {
        if !self.published.insert(fact) {
            return;
        }
        let mut fractions = false;
        let lit = matrix_literal(&self.a.fact(fact).matrix, &mut fractions);
        self.define(fact, lit, fractions, indent);
    }

    fn define(&mut self, fact: usize, body: String, fractions: bool, indent: &str) {
        let name = matrix_name(fact);
        if fractions {
            self.fraction_literals.push(name.clone());
        }
        let _ = writeln!(self.out, "{indent}/*@ logic matrix {name} = {body}; */");
    }

    /// `block_m(λ₁⁻¹·Q₁, 0, 0, block_m(λ₂⁻¹·Q₂, …))`, nested to the right.
    fn publish_sproc(&mut self, t: &HoareTriple, indent: &str) {
        if !self.published.insert(t.post) {
            return;
        }
        let mut fractions = false;
        let parts: Vec<(String, usize)> = t
            .pres
            .iter()
            .zip(&t.multipliers)
            .map(|(&p, l)| {
                let s = render_exact(&l.recip());
                fractions |= s.contains('/');
                (format!("mat_scalar_mult({s},{})", matrix_name(p)), self.a.fact(p).dim())
            })
            .collect();
        let mut expr = String::new();
        let mut rest_dim = 0;
        for (i, (scaled, dim)) in parts.iter().enumerate().rev() {
            if i + 1 == parts.len() {
                expr = scaled.clone();
            } else {
                expr = format!("block_m({scaled},zeros({dim},{rest_dim}),zeros({rest_dim},{dim}),{expr})");
            }
            rest_dim += dim;
        }
        self.define(t.post, expr, fractions, indent);
    }

    fn triple(&mut self, t: &HoareTriple, indent: &str) {
        for &p in &t.pres {
            self.publish_literal(p, indent);
        }
        match t.tactic {
            Tactic::SProcedure => self.publish_sproc(t, indent),
            Tactic::AffineEllipsoid => self.publish_literal(t.post, indent),
        }
        let _ = writeln!(self.out, "{indent}/*@ behavior {}:", t.label);
        for &p in &t.pres {
            let kw = if self.a.facts[p].assumed { "assumes" } else { "requires" };
            let _ = writeln!(self.out, "{indent}      {kw} {};", self.predicate(p));
        }
        let _ = writeln!(self.out, "{indent}      ensures {};", self.predicate(t.post));
        let _ = writeln!(self.out, "{indent}      @ PROOF_TACTIC (use_strategy ({}));", t.tactic);
        let _ = writeln!(self.out, "{indent}*/");
        match t.stmt {
            Some(i) => {
                let s = render_statement(&self.a.program, &self.a.program.stmts[i]);
                let _ = writeln!(self.out, "{indent}{{\n{indent}  {s}\n{indent}}}");
            }
            None => {
                let _ = writeln!(self.out, "{indent}{{\n{indent}}}");
            }
        }
    }
}

/// Renders the program and, when a contract is present, its annotations.
pub fn emit_c(annotated: &AnnotatedProgram) -> EmittedC {
    let p = &annotated.program;
    let name = &p.name;
    let mut e = Emitter { a: annotated, out: String::new(), published: BTreeSet::new(), fraction_literals: Vec::new() };

    let _ = writeln!(e.out, "/* {name}: generated loop update */\n");
    let _ = writeln!(e.out, "typedef struct {{");
    for v in p.inputs.iter().chain(&p.outputs) {
        let _ = writeln!(e.out, "  double {v};");
    }
    let _ = writeln!(e.out, "}} t_{name}_io;\n");
    let _ = writeln!(e.out, "typedef struct {{");
    for v in &p.state_vars {
        let _ = writeln!(e.out, "  double {v};");
    }
    let _ = writeln!(e.out, "}} t_{name}_state;\n");
    let _ = writeln!(e.out, "void {name}_init(t_{name}_state *_state_) {{");
    for v in &p.state_vars {
        let _ = writeln!(e.out, "  _state_->{v} = 0;");
    }
    let _ = writeln!(e.out, "}}\n");

    if let Some(c) = &annotated.contract {
        for f in [c.pre, c.post, c.body_pre] {
            e.publish_literal(f, "");
        }
        let _ = writeln!(e.out, "/*@ requires {};", e.predicate(c.pre));
        let _ = writeln!(e.out, "  @ requires \\valid(_io_) && \\valid(_state_);");
        let _ = writeln!(e.out, "  @ ensures {};", e.predicate(c.post));
        let _ = writeln!(e.out, "*/");
    }
    let _ = writeln!(e.out, "void {name}_compute(t_{name}_io *_io_, t_{name}_state *_state_) {{");
    for t in &p.temps {
        let _ = writeln!(e.out, "  double {t};");
    }
    let n = p.stmts.len();
    for i in 0..=n {
        for t in annotated.triples.iter().filter(|t| t.at == i && t.stmt.is_none()) {
            e.triple(t, "  ");
        }
        if i == n {
            break;
        }
        match annotated.triples.iter().find(|t| t.stmt == Some(i)) {
            Some(t) => e.triple(t, "  "),
            None => {
                let s = render_statement(p, &p.stmts[i]);
                let _ = writeln!(e.out, "  {s}");
            }
        }
    }
    let _ = writeln!(e.out, "}}");
    EmittedC { text: e.out, fraction_literals: e.fraction_literals }
}
