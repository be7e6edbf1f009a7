//! The spec language.
//!
//! One statement per line, `#` starts a comment:
//!
//! ```text
//! preset deformed3d
//! base = [0, 1]
//! param eps = 1/2          # rational, `infinity`, `free`, or a polynomial for fpoly
//! deform T += Omega^2 * lam^-1
//! run connection --kind lambda
//! ```
//!
//! Expressions are polynomials in the fibre symbols of the space and Laurent
//! polynomials in `lam`, with integer and rational coefficients. Names are
//! checked against the rows of the space, so a typo is reported where it
//! occurs rather than when the pipeline runs.

use std::collections::BTreeMap;
use std::fmt;

use kodaira::moduli::{build_space, Deformation, ParamValue, Preset, TwistorSpace, TwistorSpaceSpec};
use kodaira::symbolic::{registry, LaurentPoly, SymExpr, VarKind, Q};
use num_bigint::BigInt;
use num_traits::{Signed, Zero};

use crate::error::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct Pos {
    pub line: usize,
    pub col: usize,
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
enum Tok {
    Ident(String),
    Int(BigInt),
    PlusEq,
    Sym(char),
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) => write!(f, "`{s}`"),
            Tok::Int(n) => write!(f, "`{n}`"),
            Tok::PlusEq => f.write_str("`+=`"),
            Tok::Sym(c) => write!(f, "`{c}`"),
        }
    }
}

#[derive(Clone, Debug)]
struct Token {
    tok: Tok,
    pos: Pos,
}

fn lex_line(text: &str, line: usize) -> Result<Vec<Token>, CliError> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let pos = Pos { line, col: i + 1 };
        if c == '#' {
            break;
        }
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        if c.is_ascii_digit() {
            let start = i;
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
            let digits: String = chars[start..i].iter().collect();
            out.push(Token { tok: Tok::Int(digits.parse().expect("ascii digits")), pos });
            continue;
        }
        if c.is_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            out.push(Token { tok: Tok::Ident(chars[start..i].iter().collect()), pos });
            continue;
        }
        if c == '+' && chars.get(i + 1) == Some(&'=') {
            out.push(Token { tok: Tok::PlusEq, pos });
            i += 2;
            continue;
        }
        if "+-*/^()[],=.:".contains(c) {
            out.push(Token { tok: Tok::Sym(c), pos });
            i += 1;
            continue;
        }
        return Err(CliError::parse(pos, format!("unexpected character `{c}`")));
    }
    Ok(out)
}

/// Parsed expression with the position of its leading token.
#[derive(Clone, Debug, PartialEq)]
pub struct Expr {
    pub node: Node,
    pub pos: Pos,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Node {
    Num(Q),
    Ident(String),
    Call(String, Vec<Expr>),
    Neg(Box<Expr>),
    Bin(char, Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, i32),
}

struct Cursor<'a> {
    toks: &'a [Token],
    i: usize,
    /// Where to point when the line ends early: its last character.
    eol: Pos,
}

impl<'a> Cursor<'a> {
    fn new(toks: &'a [Token], eol: Pos) -> Self {
        Cursor { toks, i: 0, eol }
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.i).map(|t| &t.tok)
    }

    fn pos(&self) -> Pos {
        self.toks.get(self.i).map(|t| t.pos).unwrap_or(self.eol)
    }

    fn next(&mut self) -> Option<&Token> {
        let t = self.toks.get(self.i);
        self.i += 1;
        t
    }

    fn at_end(&self) -> bool {
        self.i >= self.toks.len()
    }

    fn eat(&mut self, c: char) -> bool {
        if self.peek() == Some(&Tok::Sym(c)) {
            self.i += 1;
            true
        } else {
            false
        }
    }

    fn unexpected(&self, want: &str) -> CliError {
        match self.toks.get(self.i) {
            Some(t) => CliError::parse(t.pos, format!("expected {want}, found {}", t.tok)),
            None => CliError::parse(self.eol, format!("expected {want} before the end of the line")),
        }
    }

    fn expect(&mut self, c: char) -> Result<(), CliError> {
        if self.eat(c) {
            Ok(())
        } else {
            Err(self.unexpected(&format!("`{c}`")))
        }
    }

    fn ident(&mut self, want: &str) -> Result<(String, Pos), CliError> {
        match self.peek() {
            Some(Tok::Ident(s)) => {
                let s = s.clone();
                let pos = self.pos();
                self.i += 1;
                Ok((s, pos))
            }
            _ => Err(self.unexpected(want)),
        }
    }

    fn int(&mut self) -> Result<i64, CliError> {
        let neg = self.eat('-');
        let pos = self.pos();
        match self.next().map(|t| t.tok.clone()) {
            Some(Tok::Int(n)) => {
                let n: i64 = n.try_into().map_err(|_| CliError::parse(pos, "integer out of range"))?;
                Ok(if neg { -n } else { n })
            }
            _ => {
                self.i -= 1;
                Err(self.unexpected("an integer"))
            }
        }
    }

    fn finish(&self) -> Result<(), CliError> {
        if self.at_end() {
            Ok(())
        } else {
            Err(self.unexpected("the end of the line"))
        }
    }

    fn expr(&mut self) -> Result<Expr, CliError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Some(Tok::Sym(c @ ('+' | '-'))) => *c,
                _ => return Ok(lhs),
            };
            self.i += 1;
            let rhs = self.term()?;
            let pos = lhs.pos;
            lhs = Expr { node: Node::Bin(op, Box::new(lhs), Box::new(rhs)), pos };
        }
    }

    fn term(&mut self) -> Result<Expr, CliError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Some(Tok::Sym(c @ ('*' | '/'))) => *c,
                _ => return Ok(lhs),
            };
            self.i += 1;
            let rhs = self.unary()?;
            let pos = lhs.pos;
            lhs = Expr { node: Node::Bin(op, Box::new(lhs), Box::new(rhs)), pos };
        }
    }

    fn unary(&mut self) -> Result<Expr, CliError> {
        let pos = self.pos();
        if self.eat('-') {
            let inner = self.unary()?;
            return Ok(Expr { node: Node::Neg(Box::new(inner)), pos });
        }
        let base = self.atom()?;
        if self.eat('^') {
            let e = self.int()?;
            let e = i32::try_from(e).map_err(|_| CliError::parse(pos, "exponent out of range"))?;
            return Ok(Expr { node: Node::Pow(Box::new(base), e), pos });
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr, CliError> {
        let pos = self.pos();
        match self.peek().cloned() {
            Some(Tok::Int(n)) => {
                self.i += 1;
                Ok(Expr { node: Node::Num(Q::from_integer(n)), pos })
            }
            Some(Tok::Ident(name)) => {
                self.i += 1;
                if !self.eat('(') {
                    return Ok(Expr { node: Node::Ident(name), pos });
                }
                let mut args = vec![self.expr()?];
                while self.eat(',') {
                    args.push(self.expr()?);
                }
                self.expect(')')?;
                Ok(Expr { node: Node::Call(name, args), pos })
            }
            Some(Tok::Sym('(')) => {
                self.i += 1;
                let e = self.expr()?;
                self.expect(')')?;
                Ok(e)
            }
            _ => Err(self.unexpected("an expression")),
        }
    }
}

fn eol_pos(text: &str, line: usize) -> Pos {
    let body = text.split('#').next().unwrap_or("");
    Pos { line, col: body.trim_end().chars().count().max(1) }
}

/// Parses a standalone expression, positions relative to `line`.
pub fn parse_expr(text: &str, line: usize) -> Result<Expr, CliError> {
    let toks = lex_line(text, line)?;
    let mut cur = Cursor::new(&toks, eol_pos(text, line));
    let e = cur.expr()?;
    cur.finish()?;
    Ok(e)
}

/// How names and calls inside an expression are resolved.
pub trait Scope {
    fn ident(&self, name: &str) -> Option<LaurentPoly>;

    fn call(&self, name: &str, args: &[LaurentPoly], pos: Pos) -> Result<LaurentPoly, CliError> {
        let _ = args;
        Err(CliError::UnknownSymbol { name: format!("{name}(..)"), pos })
    }
}

fn single_term(p: &LaurentPoly) -> Option<(i32, SymExpr)> {
    let mut it = p.terms();
    let (k, c) = it.next()?;
    if it.next().is_some() {
        return None;
    }
    Some((k, c.clone()))
}

fn invert(p: &LaurentPoly, pos: Pos) -> Result<LaurentPoly, CliError> {
    let (k, c) = single_term(p).ok_or_else(|| CliError::parse(pos, "can only divide by a single term"))?;
    if c.vars().iter().any(|v| v.kind() == VarKind::Fibre) {
        return Err(CliError::parse(pos, "division by a fibre symbol is not polynomial"));
    }
    let inv = c.inv().map_err(|_| CliError::parse(pos, "division by zero"))?;
    Ok(LaurentPoly::monomial(-k, inv))
}

pub fn eval(e: &Expr, scope: &dyn Scope) -> Result<LaurentPoly, CliError> {
    Ok(match &e.node {
        Node::Num(q) => LaurentPoly::constant(SymExpr::rational(q.clone())),
        Node::Ident(name) => scope.ident(name).ok_or_else(|| CliError::UnknownSymbol { name: name.clone(), pos: e.pos })?,
        Node::Call(name, args) => {
            let vals = args.iter().map(|a| eval(a, scope)).collect::<Result<Vec<_>, _>>()?;
            scope.call(name, &vals, e.pos)?
        }
        Node::Neg(x) => eval(x, scope)?.neg(),
        Node::Bin(op, a, b) => {
            let (x, y) = (eval(a, scope)?, eval(b, scope)?);
            match op {
                '+' => x.add(&y),
                '-' => x.sub(&y),
                '*' => x.mul(&y),
                _ => x.mul(&invert(&y, b.pos)?),
            }
        }
        Node::Pow(x, k) => {
            let base = eval(x, scope)?;
            let base = if *k < 0 { invert(&base, x.pos)? } else { base };
            base.pow(k.unsigned_abs())
        }
    })
}

/// The lambda-free rational value of an expression.
pub fn eval_rational(e: &Expr, scope: &dyn Scope) -> Result<Q, CliError> {
    let p = eval(e, scope)?;
    let zero = || Q::zero();
    match single_term(&p) {
        None => Ok(zero()),
        Some((0, c)) => c.as_rational().ok_or_else(|| CliError::parse(e.pos, "expected a rational number")),
        Some(_) => Err(CliError::parse(e.pos, "expected a rational number, found a power of lam")),
    }
}

/// A spec file after name resolution.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SpecDocument {
    pub preset: Option<Preset>,
    pub base: Option<Vec<i32>>,
    pub params: BTreeMap<String, ParamValue>,
    pub deformations: Vec<Deformation>,
    /// Command lines listed with `run`, without the keyword.
    pub commands: Vec<String>,
}

impl SpecDocument {
    pub fn to_spec(&self) -> TwistorSpaceSpec {
        let preset = self.preset.unwrap_or(if self.deformations.is_empty() { Preset::Flat } else { Preset::Custom });
        TwistorSpaceSpec {
            preset,
            base_type: self.base.clone().unwrap_or_default(),
            deformations: self.deformations.clone(),
            params: self.params.clone(),
        }
    }
}

fn fmt_rational(q: &Q) -> String {
    if q.is_integer() {
        q.numer().to_string()
    } else if q.is_negative() {
        format!("-{}/{}", q.numer().abs(), q.denom())
    } else {
        format!("{}/{}", q.numer(), q.denom())
    }
}

/// The canonical text form; parsing it gives back the same document.
impl fmt::Display for SpecDocument {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(p) = self.preset {
            writeln!(f, "preset {}", p.name())?;
        }
        if let Some(b) = &self.base {
            let items: Vec<String> = b.iter().map(|d| d.to_string()).collect();
            writeln!(f, "base = [{}]", items.join(", "))?;
        }
        for (name, v) in &self.params {
            let value = match v {
                ParamValue::Rational(q) => fmt_rational(q),
                ParamValue::Infinity => "infinity".into(),
                ParamValue::Free => "free".into(),
                ParamValue::Poly(p) => p.to_string(),
            };
            writeln!(f, "param {name} = {value}")?;
        }
        for d in &self.deformations {
            writeln!(f, "deform {} += {}", d.row, d.expr)?;
        }
        for c in &self.commands {
            writeln!(f, "run {c}")?;
        }
        Ok(())
    }
}

enum Stmt {
    Preset(String, Pos),
    Base(Vec<i32>, Pos),
    Param { name: String, value: ParamSyntax, pos: Pos },
    Deform { row: String, row_pos: Pos, expr: Expr },
    Run(String),
}

enum ParamSyntax {
    Infinity,
    Free,
    Expr(Expr),
}

fn parse_statement(text: &str, line: usize) -> Result<Option<Stmt>, CliError> {
    let toks = lex_line(text, line)?;
    if toks.is_empty() {
        return Ok(None);
    }
    let mut cur = Cursor::new(&toks, eol_pos(text, line));
    let (kw, kw_pos) = cur.ident("a statement keyword")?;
    let stmt = match kw.as_str() {
        "preset" => {
            let (name, pos) = cur.ident("a preset name")?;
            Stmt::Preset(name, pos)
        }
        "base" => {
            cur.expect('=')?;
            cur.expect('[')?;
            let mut degrees = Vec::new();
            if !cur.eat(']') {
                loop {
                    let pos = cur.pos();
                    let d = cur.int()?;
                    degrees.push(i32::try_from(d).map_err(|_| CliError::parse(pos, "degree out of range"))?);
                    if cur.eat(']') {
                        break;
                    }
                    if !cur.eat(',') {
                        return Err(cur.unexpected("`,` or `]`"));
                    }
                }
            }
            Stmt::Base(degrees, kw_pos)
        }
        "param" => {
            let (name, pos) = cur.ident("a parameter name")?;
            cur.expect('=')?;
            let value = match cur.peek() {
                Some(Tok::Ident(s)) if s == "infinity" && cur.toks.len() == cur.i + 1 => {
                    cur.i += 1;
                    ParamSyntax::Infinity
                }
                Some(Tok::Ident(s)) if s == "free" && cur.toks.len() == cur.i + 1 => {
                    cur.i += 1;
                    ParamSyntax::Free
                }
                _ => ParamSyntax::Expr(cur.expr()?),
            };
            Stmt::Param { name, value, pos }
        }
        "deform" => {
            let (row, row_pos) = cur.ident("a row name")?;
            if cur.peek() != Some(&Tok::PlusEq) {
                return Err(cur.unexpected("`+=`"));
            }
            cur.i += 1;
            Stmt::Deform { row, row_pos, expr: cur.expr()? }
        }
        "run" => {
            let body = text.split('#').next().unwrap_or("");
            let rest = body.trim_start().strip_prefix("run").unwrap_or("");
            let words: Vec<&str> = rest.split_whitespace().collect();
            if words.is_empty() {
                return Err(CliError::parse(kw_pos, "`run` needs a command"));
            }
            return Ok(Some(Stmt::Run(words.join(" "))));
        }
        other => return Err(CliError::parse(kw_pos, format!("unknown statement `{other}`"))),
    };
    cur.finish()?;
    Ok(Some(stmt))
}

/// Family parameters a preset reads, besides the deformation polynomial.
fn preset_params(p: Preset) -> &'static [&'static str] {
    match p {
        Preset::Deformed5d | Preset::EpsilonFamily => &["eps"],
        Preset::CFamily => &["c", "n"],
        Preset::GibbonsHawking => &["alpha"],
        _ => &[],
    }
}

struct SpecScope {
    rows: Vec<String>,
    constants: Vec<String>,
}

impl Scope for SpecScope {
    fn ident(&self, name: &str) -> Option<LaurentPoly> {
        if name == "lam" {
            return Some(LaurentPoly::lambda_pow(1));
        }
        if self.rows.iter().any(|r| r == name) {
            return Some(LaurentPoly::constant(SymExpr::var(registry::fibre(name))));
        }
        if self.constants.iter().any(|c| c == name) {
            return Some(LaurentPoly::constant(SymExpr::var(registry::constant(name))));
        }
        None
    }
}

/// `lam`, the fibre symbols of `space` and its family constants.
pub fn fibre_scope(space: &TwistorSpace) -> impl Scope {
    SpecScope {
        rows: space.rows.iter().map(|r| r.name.clone()).collect(),
        constants: space.params.keys().filter(|k| *k != "fpoly").cloned().collect(),
    }
}

pub fn parse_spec(text: &str) -> Result<SpecDocument, CliError> {
    let mut stmts = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if let Some(s) = parse_statement(line, i + 1)? {
            stmts.push(s);
        }
    }

    let mut preset: Option<(Preset, Pos)> = None;
    let mut base: Option<(Vec<i32>, Pos)> = None;
    let mut commands = Vec::new();
    for s in &stmts {
        match s {
            Stmt::Preset(name, pos) => {
                if preset.is_some() {
                    return Err(CliError::parse(*pos, "preset given twice"));
                }
                let p = Preset::from_name(name).ok_or_else(|| CliError::UnknownSymbol { name: name.clone(), pos: *pos })?;
                preset = Some((p, *pos));
            }
            Stmt::Base(b, pos) => {
                if base.is_some() {
                    return Err(CliError::parse(*pos, "base given twice"));
                }
                base = Some((b.clone(), *pos));
            }
            Stmt::Run(c) => commands.push(c.clone()),
            _ => {}
        }
    }
    let anchor = preset.map(|p| p.1).or(base.as_ref().map(|b| b.1)).unwrap_or(Pos { line: 1, col: 1 });

    // The rows come from the bare space, before any deformation is read.
    let has_deform = stmts.iter().any(|s| matches!(s, Stmt::Deform { .. }));
    let skeleton = TwistorSpaceSpec {
        preset: preset.map(|p| p.0).unwrap_or(if has_deform { Preset::Custom } else { Preset::Flat }),
        base_type: base.as_ref().map(|b| b.0.clone()).unwrap_or_default(),
        deformations: Vec::new(),
        params: BTreeMap::new(),
    };
    let rows: Vec<String> = match build_space(&skeleton) {
        Ok(space) => space.rows.iter().map(|r| r.name.clone()).collect(),
        Err(e) => return Err(CliError::Spec { pos: anchor, message: e.to_string() }),
    };
    let mut constants: Vec<String> = preset.map(|p| preset_params(p.0)).unwrap_or_default().iter().map(|s| s.to_string()).collect();
    for s in &stmts {
        if let Stmt::Param { name, .. } = s {
            if name != "fpoly" {
                constants.push(name.clone());
            }
        }
    }
    let scope = SpecScope { rows, constants };

    let mut params = BTreeMap::new();
    let mut deformations = Vec::new();
    for s in &stmts {
        match s {
            Stmt::Param { name, value, pos } => {
                let v = match value {
                    ParamSyntax::Infinity => ParamValue::Infinity,
                    ParamSyntax::Free => ParamValue::Free,
                    ParamSyntax::Expr(e) if name == "fpoly" => ParamValue::Poly(eval(e, &scope)?),
                    ParamSyntax::Expr(e) => ParamValue::Rational(eval_rational(e, &scope)?),
                };
                if params.insert(name.clone(), v).is_some() {
                    return Err(CliError::parse(*pos, format!("parameter `{name}` given twice")));
                }
            }
            Stmt::Deform { row, row_pos, expr } => {
                if !scope.rows.contains(row) {
                    return Err(CliError::UnknownSymbol { name: row.clone(), pos: *row_pos });
                }
                deformations.push(Deformation { row: row.clone(), expr: eval(expr, &scope)? });
            }
            _ => {}
        }
    }
    let doc = SpecDocument { preset: preset.map(|p| p.0), base: base.map(|b| b.0), params, deformations, commands };
    build_space(&doc.to_spec()).map_err(|e| CliError::Spec { pos: anchor, message: e.to_string() })?;
    Ok(doc)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn precedence_and_powers() {
        struct S;
        impl Scope for S {
            fn ident(&self, name: &str) -> Option<LaurentPoly> {
                (name == "lam").then(|| LaurentPoly::lambda_pow(1))
            }
        }
        let e = parse_expr("2 - 3*lam^-2/4 + -lam", 1).unwrap();
        let p = eval(&e, &S).unwrap();
        assert_eq!(p.coeff(0), SymExpr::int(2));
        assert_eq!(p.coeff(-2), SymExpr::frac(-3, 4));
        assert_eq!(p.coeff(1), SymExpr::int(-1));
    }
}
