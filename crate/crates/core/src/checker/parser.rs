//! Parser for the annotated C subset produced by the code generator.
//!
//! Only that grammar is accepted (see `docs/grammar.md`); anything else is
//! reported with its line and column.

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use num::Zero;

use crate::annotation::Tactic;
use crate::codegen::AffineAssignment;
use crate::linalg::{parse_decimal, Rational, RationalMatrix};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub struct ParseError {
    pub line: usize,
    pub col: usize,
    pub message: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}, column {}: {}", self.line, self.col, self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Ident(String),
    Num(String),
    Punct(&'static str),
    AnnStart,
    AnnEnd,
    Eof,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) | Tok::Num(s) => write!(f, "`{s}`"),
            Tok::Punct(p) => write!(f, "`{p}`"),
            Tok::AnnStart => f.write_str("`/*@`"),
            Tok::AnnEnd => f.write_str("`*/`"),
            Tok::Eof => f.write_str("end of input"),
        }
    }
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    line: usize,
    col: usize,
}

const PUNCT: [&str; 14] = ["->", "&&", "(", ")", "{", "}", ",", ";", ":", "=", "*", "+", "-", "/"];

fn tokenize(text: &str) -> Result<Vec<Token>, ParseError> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0, 1, 1);
    let mut in_annot = false;
    let at = |i: usize, s: &str| s.chars().enumerate().all(|(k, c)| chars.get(i + k) == Some(&c));
    macro_rules! bump {
        ($n:expr) => {
            for _ in 0..$n {
                if chars[i] == '\n' {
                    line += 1;
                    col = 1;
                } else {
                    col += 1;
                }
                i += 1;
            }
        };
    }
    while i < chars.len() {
        let c = chars[i];
        let (l0, c0) = (line, col);
        let err = |m: String| ParseError { line: l0, col: c0, message: m };
        if c.is_whitespace() {
            bump!(1);
        } else if !in_annot && at(i, "/*@") {
            out.push(Token { tok: Tok::AnnStart, line, col });
            in_annot = true;
            bump!(3);
        } else if at(i, "*/") {
            if !in_annot {
                return Err(err("`*/` outside a comment".into()));
            }
            out.push(Token { tok: Tok::AnnEnd, line, col });
            in_annot = false;
            bump!(2);
        } else if at(i, "/*") {
            if in_annot {
                return Err(err("nested comment inside annotation".into()));
            }
            bump!(2);
            while i < chars.len() && !at(i, "*/") {
                bump!(1);
            }
            if i >= chars.len() {
                return Err(err("unterminated comment".into()));
            }
            bump!(2);
        } else if at(i, "//") {
            while i < chars.len() && chars[i] != '\n' {
                bump!(1);
            }
        } else if in_annot && c == '@' {
            bump!(1);
        } else if c.is_ascii_alphabetic() || c == '_' || c == '\\' {
            let start = i;
            bump!(1);
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                bump!(1);
            }
            out.push(Token { tok: Tok::Ident(chars[start..i].iter().collect()), line: l0, col: c0 });
        } else if c.is_ascii_digit() {
            let start = i;
            while i < chars.len() && chars[i].is_ascii_digit() {
                bump!(1);
            }
            if i < chars.len() && chars[i] == '.' {
                bump!(1);
                while i < chars.len() && chars[i].is_ascii_digit() {
                    bump!(1);
                }
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                bump!(1);
                if i < chars.len() && (chars[i] == '+' || chars[i] == '-') {
                    bump!(1);
                }
                while i < chars.len() && chars[i].is_ascii_digit() {
                    bump!(1);
                }
            }
            out.push(Token { tok: Tok::Num(chars[start..i].iter().collect()), line: l0, col: c0 });
        } else if let Some(p) = PUNCT.iter().find(|p| at(i, p)) {
            out.push(Token { tok: Tok::Punct(p), line, col });
            bump!(p.len());
        } else {
            return Err(err(format!("unexpected character {c:?}")));
        }
    }
    if in_annot {
        return Err(ParseError { line, col, message: "unterminated annotation".into() });
    }
    out.push(Token { tok: Tok::Eof, line, col });
    Ok(out)
}

/// `in_ellipsoidQ(<matrix>, vect_of_n_scalar(<vars>))` with variables in
/// plain form (`_state_->x` becomes `x`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Predicate {
    pub matrix: String,
    pub vars: Vec<String>,
    pub line: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedTriple {
    pub label: String,
    pub requires: Vec<Predicate>,
    pub assumes: Vec<Predicate>,
    pub ensures: Predicate,
    pub tactic: Tactic,
    /// `None` for an empty block.
    pub stmt: Option<AffineAssignment>,
    pub line: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BodyItem {
    Statement { stmt: AffineAssignment, line: usize },
    Triple(ParsedTriple),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedContract {
    pub requires: Vec<Predicate>,
    pub ensures: Vec<Predicate>,
    /// `\valid(_io_) && \valid(_state_)` was stated.
    pub valid_pointers: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedArtifact {
    pub name: String,
    pub io_fields: Vec<String>,
    pub state_fields: Vec<String>,
    pub locals: Vec<String>,
    pub matrices: BTreeMap<String, RationalMatrix>,
    /// Definition order.
    pub matrix_order: Vec<String>,
    pub contract: Option<ParsedContract>,
    pub body: Vec<BodyItem>,
}

impl ParsedArtifact {
    pub fn statements(&self) -> Vec<&AffineAssignment> {
        self.body
            .iter()
            .filter_map(|b| match b {
                BodyItem::Statement { stmt, .. } => Some(stmt),
                BodyItem::Triple(t) => t.stmt.as_ref(),
            })
            .collect()
    }

    pub fn triples(&self) -> impl Iterator<Item = &ParsedTriple> {
        self.body.iter().filter_map(|b| match b {
            BodyItem::Triple(t) => Some(t),
            BodyItem::Statement { .. } => None,
        })
    }

    pub fn matrix(&self, name: &str) -> &RationalMatrix {
        &self.matrices[name]
    }
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
    matrices: BTreeMap<String, RationalMatrix>,
    matrix_order: Vec<String>,
    io_fields: Vec<String>,
    state_fields: Vec<String>,
    locals: Vec<String>,
}

type PResult<T> = Result<T, ParseError>;

impl Parser {
    fn peek(&self) -> &Token {
        &self.toks[self.pos]
    }

    fn next(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn err_at<T>(&self, t: &Token, message: impl Into<String>) -> PResult<T> {
        Err(ParseError { line: t.line, col: t.col, message: message.into() })
    }

    fn expected<T>(&self, what: &str) -> PResult<T> {
        let t = self.peek().clone();
        self.err_at(&t, format!("expected {what}, found {}", t.tok))
    }

    fn is_punct(&self, p: &str) -> bool {
        matches!(&self.peek().tok, Tok::Punct(q) if *q == p)
    }

    fn is_ident(&self, s: &str) -> bool {
        matches!(&self.peek().tok, Tok::Ident(q) if q == s)
    }

    fn punct(&mut self, p: &str) -> PResult<()> {
        if self.is_punct(p) {
            self.next();
            Ok(())
        } else {
            self.expected(&format!("`{p}`"))
        }
    }

    fn keyword(&mut self, k: &str) -> PResult<()> {
        if self.is_ident(k) {
            self.next();
            Ok(())
        } else {
            self.expected(&format!("`{k}`"))
        }
    }

    fn ident(&mut self) -> PResult<(String, Token)> {
        match self.peek().tok.clone() {
            Tok::Ident(s) => Ok((s, self.next())),
            _ => self.expected("identifier"),
        }
    }

    fn number(&mut self) -> PResult<Rational> {
        let t = self.peek().clone();
        match &t.tok {
            Tok::Num(s) => {
                self.next();
                parse_decimal(s).or_else(|e| self.err_at(&t, e.to_string()))
            }
            _ => self.expected("number"),
        }
    }

    fn int(&mut self) -> PResult<usize> {
        let t = self.peek().clone();
        match &t.tok {
            Tok::Num(s) => {
                self.next();
                s.parse().or_else(|_| self.err_at(&t, format!("expected an integer, found {s}")))
            }
            _ => self.expected("integer"),
        }
    }

    /// `NUM` or `(NUM/NUM)`, unsigned.
    fn magnitude(&mut self) -> PResult<Rational> {
        if self.is_punct("(") {
            let open = self.next();
            let n = self.number()?;
            self.punct("/")?;
            let d = self.number()?;
            self.punct(")")?;
            if d.is_zero() {
                return self.err_at(&open, "zero denominator");
            }
            Ok(n / d)
        } else {
            self.number()
        }
    }

    fn signed(&mut self) -> PResult<Rational> {
        if self.is_punct("-") {
            self.next();
            Ok(-self.magnitude()?)
        } else {
            self.magnitude()
        }
    }

    fn file(mut self) -> PResult<ParsedArtifact> {
        let mut name = None;
        let mut pending_contract = None;
        let mut contract = None;
        let mut body = None;
        loop {
            let t = self.peek().clone();
            match &t.tok {
                Tok::Eof => break,
                Tok::Ident(k) if k == "typedef" => {
                    let (fields, tname) = self.typedef()?;
                    if let Some(n) = tname.strip_prefix("t_").and_then(|s| s.strip_suffix("_io")) {
                        name = Some(n.to_string());
                        self.io_fields = fields;
                    } else if tname.starts_with("t_") && tname.ends_with("_state") {
                        self.state_fields = fields;
                    } else {
                        return self.err_at(&t, format!("unexpected struct {tname}"));
                    }
                }
                Tok::AnnStart => {
                    self.next();
                    if self.is_ident("logic") {
                        self.logic_def()?;
                    } else {
                        if pending_contract.is_some() {
                            return self.err_at(&t, "two function contracts in a row");
                        }
                        pending_contract = Some(self.contract()?);
                    }
                    self.expect_ann_end()?;
                }
                Tok::Ident(k) if k == "void" => {
                    self.next();
                    let (fname, ft) = self.ident()?;
                    self.params()?;
                    if fname.ends_with("_init") {
                        self.init_body()?;
                    } else if fname.ends_with("_compute") {
                        if body.is_some() {
                            return self.err_at(&ft, "second compute function");
                        }
                        contract = pending_contract.take();
                        body = Some(self.compute_body()?);
                    } else {
                        return self.err_at(&ft, format!("unexpected function {fname}"));
                    }
                }
                _ => return self.expected("`typedef`, `void` or an annotation"),
            }
        }
        let t = self.peek().clone();
        let name = match name {
            Some(n) => n,
            None => return self.err_at(&t, "missing io struct"),
        };
        let body = match body {
            Some(b) => b,
            None => return self.err_at(&t, "missing compute function"),
        };
        Ok(ParsedArtifact {
            name,
            io_fields: self.io_fields,
            state_fields: self.state_fields,
            locals: self.locals,
            matrices: self.matrices,
            matrix_order: self.matrix_order,
            contract,
            body,
        })
    }

    fn expect_ann_end(&mut self) -> PResult<()> {
        if matches!(self.peek().tok, Tok::AnnEnd) {
            self.next();
            Ok(())
        } else {
            self.expected("`*/`")
        }
    }

    fn typedef(&mut self) -> PResult<(Vec<String>, String)> {
        self.keyword("typedef")?;
        self.keyword("struct")?;
        self.punct("{")?;
        let mut fields = Vec::new();
        while !self.is_punct("}") {
            self.keyword("double")?;
            fields.push(self.ident()?.0);
            self.punct(";")?;
        }
        self.punct("}")?;
        let (name, _) = self.ident()?;
        self.punct(";")?;
        Ok((fields, name))
    }

    fn params(&mut self) -> PResult<()> {
        self.punct("(")?;
        while !self.is_punct(")") {
            self.ident()?;
            self.punct("*")?;
            self.ident()?;
            if !self.is_punct(")") {
                self.punct(",")?;
            }
        }
        self.punct(")")
    }

    fn logic_def(&mut self) -> PResult<()> {
        self.keyword("logic")?;
        self.keyword("matrix")?;
        let (name, t) = self.ident()?;
        if self.matrices.contains_key(&name) {
            return self.err_at(&t, format!("matrix {name} defined twice"));
        }
        self.punct("=")?;
        let m = self.mexpr()?;
        self.punct(";")?;
        self.matrices.insert(name.clone(), m);
        self.matrix_order.push(name);
        Ok(())
    }

    fn mexpr(&mut self) -> PResult<RationalMatrix> {
        let (head, t) = self.ident()?;
        let shape_err = |p: &Self, e: crate::linalg::LinalgError| p.err_at(&t, e.to_string());
        if let Some(dims) = head.strip_prefix("mat_of_").and_then(|s| s.strip_suffix("_scalar")) {
            let (r, c) = dims
                .split_once('x')
                .and_then(|(r, c)| Some((r.parse::<usize>().ok()?, c.parse::<usize>().ok()?)))
                .map_or_else(|| self.err_at(&t, format!("malformed matrix constructor {head}")), Ok)?;
            self.punct("(")?;
            let mut entries = Vec::with_capacity(r * c);
            loop {
                entries.push(self.signed()?);
                if self.is_punct(",") {
                    self.next();
                } else {
                    break;
                }
            }
            self.punct(")")?;
            if entries.len() != r * c {
                return self.err_at(&t, format!("{head} expects {} entries, found {}", r * c, entries.len()));
            }
            return RationalMatrix::from_vec(r, c, entries).or_else(|e| shape_err(self, e));
        }
        match head.as_str() {
            "block_m" => {
                self.punct("(")?;
                let a = self.mexpr()?;
                self.punct(",")?;
                let b = self.mexpr()?;
                self.punct(",")?;
                let c = self.mexpr()?;
                self.punct(",")?;
                let d = self.mexpr()?;
                self.punct(")")?;
                RationalMatrix::block2x2(&a, &b, &c, &d).or_else(|e| shape_err(self, e))
            }
            "zeros" => {
                self.punct("(")?;
                let r = self.int()?;
                self.punct(",")?;
                let c = self.int()?;
                self.punct(")")?;
                Ok(RationalMatrix::zeros(r, c))
            }
            "mat_scalar_mult" => {
                self.punct("(")?;
                let s = self.signed()?;
                self.punct(",")?;
                let m = self.mexpr()?;
                self.punct(")")?;
                Ok(m.scale(&s))
            }
            "mat_mult" | "mat_add" | "mat_sub" => {
                self.punct("(")?;
                let a = self.mexpr()?;
                self.punct(",")?;
                let b = self.mexpr()?;
                self.punct(")")?;
                let r = match head.as_str() {
                    "mat_mult" => a.mul(&b),
                    "mat_add" => a.add(&b),
                    _ => a.sub(&b),
                };
                r.or_else(|e| shape_err(self, e))
            }
            "transpose" | "mat_inv" => {
                self.punct("(")?;
                let a = self.mexpr()?;
                self.punct(")")?;
                if head == "transpose" {
                    Ok(a.transpose())
                } else {
                    a.invert().or_else(|e| shape_err(self, e))
                }
            }
            _ => match self.matrices.get(&head) {
                Some(m) => Ok(m.clone()),
                None => self.err_at(&t, format!("undefined matrix {head}")),
            },
        }
    }

    /// Variable reference in plain form.
    fn lvalue(&mut self) -> PResult<String> {
        let (base, t) = self.ident()?;
        if self.is_punct("->") {
            self.next();
            let (field, ft) = self.ident()?;
            let fields = match base.as_str() {
                "_state_" => &self.state_fields,
                "_io_" => &self.io_fields,
                _ => return self.err_at(&t, format!("unknown struct pointer {base}")),
            };
            if !fields.contains(&field) {
                return self.err_at(&ft, format!("{base} has no field {field}"));
            }
            Ok(field)
        } else if self.locals.contains(&base) {
            Ok(base)
        } else {
            self.err_at(&t, format!("undeclared variable {base}"))
        }
    }

    fn predicate(&mut self) -> PResult<Predicate> {
        let (kw, t) = self.ident()?;
        if kw != "in_ellipsoidQ" {
            return self.err_at(&t, format!("expected in_ellipsoidQ, found {kw}"));
        }
        self.punct("(")?;
        let (matrix, mt) = self.ident()?;
        let dim = match self.matrices.get(&matrix) {
            Some(m) if m.is_square() => m.rows(),
            Some(m) => return self.err_at(&mt, format!("{matrix} is {}x{}, not square", m.rows(), m.cols())),
            None => return self.err_at(&mt, format!("undefined matrix {matrix}")),
        };
        self.punct(",")?;
        let (vect, vt) = self.ident()?;
        let n: usize = vect
            .strip_prefix("vect_of_")
            .and_then(|s| s.strip_suffix("_scalar"))
            .and_then(|s| s.parse().ok())
            .map_or_else(|| self.err_at(&vt, format!("malformed vector constructor {vect}")), Ok)?;
        self.punct("(")?;
        let mut vars = Vec::new();
        loop {
            vars.push(self.lvalue()?);
            if self.is_punct(",") {
                self.next();
            } else {
                break;
            }
        }
        self.punct(")")?;
        self.punct(")")?;
        if vars.len() != n {
            return self.err_at(&vt, format!("{vect} applied to {} variables", vars.len()));
        }
        if n != dim {
            return self.err_at(&vt, format!("arity mismatch: {vect} against {dim}x{dim} matrix {matrix}"));
        }
        let mut seen = HashSet::new();
        if let Some(v) = vars.iter().find(|v| !seen.insert(v.as_str())) {
            return self.err_at(&vt, format!("variable {v} repeated in vector"));
        }
        Ok(Predicate { matrix, vars, line: t.line })
    }

    fn valid_clause(&mut self) -> PResult<()> {
        loop {
            self.keyword("\\valid")?;
            self.punct("(")?;
            self.ident()?;
            self.punct(")")?;
            if self.is_punct("&&") {
                self.next();
            } else {
                return Ok(());
            }
        }
    }

    fn contract(&mut self) -> PResult<ParsedContract> {
        let mut c = ParsedContract { requires: Vec::new(), ensures: Vec::new(), valid_pointers: false };
        while !matches!(self.peek().tok, Tok::AnnEnd) {
            let (kw, t) = self.ident()?;
            let is_valid = self.is_ident("\\valid");
            match (kw.as_str(), is_valid) {
                ("requires", true) => {
                    self.valid_clause()?;
                    c.valid_pointers = true;
                }
                ("requires", false) => c.requires.push(self.predicate()?),
                ("ensures", false) => c.ensures.push(self.predicate()?),
                _ => return self.err_at(&t, format!("unexpected contract clause {kw}")),
            }
            self.punct(";")?;
        }
        Ok(c)
    }

    fn statement(&mut self) -> PResult<AffineAssignment> {
        let lhs = self.lvalue()?;
        self.punct("=")?;
        let mut coeffs: Vec<(String, Rational)> = Vec::new();
        let mut constant = Rational::zero();
        let mut first = true;
        loop {
            let negative = if self.is_punct("-") {
                self.next();
                true
            } else if !first && self.is_punct("+") {
                self.next();
                false
            } else if first {
                false
            } else {
                break;
            };
            first = false;
            let (coeff, var) = if matches!(self.peek().tok, Tok::Num(_)) || self.is_punct("(") {
                let c = self.magnitude()?;
                if self.is_punct("*") {
                    self.next();
                    (c, Some(self.lvalue()?))
                } else {
                    (c, None)
                }
            } else {
                (Rational::from_integer(1.into()), Some(self.lvalue()?))
            };
            let coeff = if negative { -coeff } else { coeff };
            match var {
                Some(v) => match coeffs.iter_mut().find(|(w, _)| *w == v) {
                    Some((_, c)) => *c += coeff,
                    None => coeffs.push((v, coeff)),
                },
                None => constant += coeff,
            }
        }
        self.punct(";")?;
        Ok(AffineAssignment { lhs, coeffs, constant })
    }

    fn init_body(&mut self) -> PResult<()> {
        self.punct("{")?;
        while !self.is_punct("}") {
            self.statement()?;
        }
        self.punct("}")
    }

    fn behavior(&mut self) -> PResult<ParsedTriple> {
        let (_, t) = self.ident()?; // "behavior", checked by caller
        let (label, _) = self.ident()?;
        self.punct(":")?;
        let mut requires = Vec::new();
        let mut assumes = Vec::new();
        let ensures = loop {
            let (kw, kt) = self.ident()?;
            let p = self.predicate()?;
            self.punct(";")?;
            match kw.as_str() {
                "requires" => requires.push(p),
                "assumes" => assumes.push(p),
                "ensures" => break p,
                _ => return self.err_at(&kt, format!("unexpected behavior clause {kw}")),
            }
        };
        self.keyword("PROOF_TACTIC")?;
        self.punct("(")?;
        self.keyword("use_strategy")?;
        self.punct("(")?;
        let (tactic_name, tt) = self.ident()?;
        let tactic = match tactic_name.as_str() {
            "AffineEllipsoid" => Tactic::AffineEllipsoid,
            "SProcedure" => Tactic::SProcedure,
            _ => return self.err_at(&tt, format!("unknown tactic {tactic_name}")),
        };
        self.punct(")")?;
        self.punct(")")?;
        self.punct(";")?;
        self.expect_ann_end()?;
        self.punct("{")?;
        let stmt = if self.is_punct("}") { None } else { Some(self.statement()?) };
        self.punct("}")?;
        Ok(ParsedTriple { label, requires, assumes, ensures, tactic, stmt, line: t.line })
    }

    fn compute_body(&mut self) -> PResult<Vec<BodyItem>> {
        self.punct("{")?;
        let mut items = Vec::new();
        loop {
            let t = self.peek().clone();
            match &t.tok {
                Tok::Punct("}") => {
                    self.next();
                    return Ok(items);
                }
                Tok::Ident(k) if k == "double" => {
                    self.next();
                    let (name, nt) = self.ident()?;
                    if self.locals.contains(&name) || self.io_fields.contains(&name) || self.state_fields.contains(&name) {
                        return self.err_at(&nt, format!("{name} declared twice"));
                    }
                    self.punct(";")?;
                    self.locals.push(name);
                }
                Tok::AnnStart => {
                    self.next();
                    if self.is_ident("logic") {
                        self.logic_def()?;
                        self.expect_ann_end()?;
                    } else if self.is_ident("behavior") {
                        items.push(BodyItem::Triple(self.behavior()?));
                    } else {
                        return self.expected("`logic` or `behavior`");
                    }
                }
                Tok::Ident(_) => {
                    let stmt = self.statement()?;
                    items.push(BodyItem::Statement { stmt, line: t.line });
                }
                _ => return self.expected("statement, declaration or annotation"),
            }
        }
    }
}

pub fn parse_annotated_c(text: &str) -> Result<ParsedArtifact, ParseError> {
    let toks = tokenize(text)?;
    Parser {
        toks,
        pos: 0,
        matrices: BTreeMap::new(),
        matrix_order: Vec::new(),
        io_fields: Vec::new(),
        state_fields: Vec::new(),
        locals: Vec::new(),
    }
    .file()
}
