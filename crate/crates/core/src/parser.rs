//! Recursive-descent parser for expressions and ODE systems.
//!
//! ```text
//! expr   := term (("+"|"-") term)*
//! term   := factor (("*"|"/") factor)*
//! factor := "-" factor | power
//! power  := atom ("^" factor)?
//! atom   := NUMBER | IDENT | IDENT "(" expr ")" | "(" expr ")"
//! ```
//!
//! `t` is the independent variable. Identifiers are classified through a
//! [`ParseContext`]: declared state variables, `<state>0` initial values, and
//! everything else a parameter.

use std::collections::BTreeSet;
use std::fmt;

use num_bigint::BigInt;
use thiserror::Error;

use crate::expr::{Expr, Func, Rational, Symbol};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("syntax error at {pos}: expected {expected}, found {found}")]
    Syntax {
        pos: usize,
        expected: String,
        found: String,
    },
    #[error("unknown function `{0}`")]
    UnknownFunction(String),
    #[error("duplicate state variable `{0}`")]
    DuplicateStateVar(String),
    #[error("`{0}` is reserved and cannot be a state variable")]
    ReservedName(String),
}

impl ParseError {
    fn syntax(pos: usize, expected: impl Into<String>, found: impl Into<String>) -> Self {
        ParseError::Syntax {
            pos,
            expected: expected.into(),
            found: found.into(),
        }
    }
}

/// How identifiers map onto symbol classes.
#[derive(Debug, Clone, Default)]
pub struct ParseContext {
    states: Option<BTreeSet<String>>,
    params: BTreeSet<String>,
    inits: BTreeSet<String>,
    functions: BTreeSet<String>,
}

impl ParseContext {
    /// Context for a standalone expression: identifiers of the form
    /// `<name>0` are initial values, all others are state variables.
    pub fn standalone() -> Self {
        Self::default()
    }

    /// Context for expressions over a system with the given state variables.
    pub fn with_states<I, S>(states: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        ParseContext {
            states: Some(states.into_iter().map(Into::into).collect()),
            ..Self::default()
        }
    }

    /// Context that reproduces the symbol classes of `symbols` exactly.
    pub fn from_symbols<'a>(symbols: impl IntoIterator<Item = &'a Symbol>) -> Self {
        let mut ctx = ParseContext::with_states(Vec::<String>::new());
        for s in symbols {
            match s {
                Symbol::Time => {}
                Symbol::State(n) => {
                    ctx.states.as_mut().unwrap().insert(n.clone());
                }
                Symbol::Param(n) => {
                    ctx.params.insert(n.clone());
                }
                Symbol::Init(n) => {
                    ctx.inits.insert(n.clone());
                }
            }
        }
        ctx
    }

    /// Allows `name(...)` to parse as a custom function application.
    pub fn allow_function(mut self, name: impl Into<String>) -> Self {
        self.functions.insert(name.into());
        self
    }

    fn classify(&self, name: &str) -> Expr {
        if name == "t" {
            return Expr::Time;
        }
        if self.inits.contains(name) {
            return Expr::Init(name.to_string());
        }
        if self.params.contains(name) {
            return Expr::Param(name.to_string());
        }
        match &self.states {
            None => {
                if init_base(name).is_some() {
                    Expr::Init(name.to_string())
                } else {
                    Expr::State(name.to_string())
                }
            }
            Some(states) => {
                if states.contains(name) {
                    Expr::State(name.to_string())
                } else if init_base(name).is_some_and(|b| states.contains(b)) {
                    Expr::Init(name.to_string())
                } else {
                    Expr::Param(name.to_string())
                }
            }
        }
    }

    fn function(&self, name: &str) -> Option<Func> {
        Func::builtin(name).or_else(|| {
            self.functions
                .contains(name)
                .then(|| Func::Custom(name.into()))
        })
    }
}

/// `x0` -> `Some("x")`; names without a trailing `0` or with a bare digit
/// prefix are not initial values.
fn init_base(name: &str) -> Option<&str> {
    let base = name.strip_suffix('0')?;
    let last = base.chars().last()?;
    (!last.is_ascii_digit()).then_some(base)
}

pub fn init_name(state: &str) -> String {
    format!("{state}0")
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(Rational),
    Ident(String),
    Sym(char),
    End,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Num(q) => write!(f, "number `{q}`"),
            Tok::Ident(s) => write!(f, "identifier `{s}`"),
            Tok::Sym(c) => write!(f, "`{c}`"),
            Tok::End => write!(f, "end of input"),
        }
    }
}

fn lex(text: &str, offset: usize) -> Result<Vec<(usize, Tok)>, ParseError> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_ascii_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() {
            let start = i;
            while i < bytes.len() && bytes[i].is_ascii_digit() {
                i += 1;
            }
            let int_part = &text[start..i];
            let mut value = Rational::from_integer(int_part.parse::<BigInt>().unwrap());
            if i + 1 < bytes.len() && bytes[i] == b'.' && bytes[i + 1].is_ascii_digit() {
                i += 1;
                let fstart = i;
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
                let frac = &text[fstart..i];
                let scale = num_traits::pow::Pow::pow(&BigInt::from(10u32), frac.len());
                value += Rational::new(frac.parse::<BigInt>().unwrap(), scale);
            }
            out.push((offset + start, Tok::Num(value)));
        } else if c.is_ascii_alphabetic() {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push((offset + start, Tok::Ident(text[start..i].to_string())));
        } else if "+-*/^(),".contains(c) {
            out.push((offset + i, Tok::Sym(c)));
            i += 1;
        } else {
            let ch = text[i..].chars().next().unwrap();
            return Err(ParseError::syntax(offset + i, "expression", format!("`{ch}`")));
        }
    }
    out.push((offset + text.len(), Tok::End));
    Ok(out)
}

struct Parser<'a> {
    toks: Vec<(usize, Tok)>,
    pos: usize,
    ctx: &'a ParseContext,
}

impl Parser<'_> {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].1
    }

    fn at(&self) -> usize {
        self.toks[self.pos].0
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].1.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn eat(&mut self, c: char) -> bool {
        if self.peek() == &Tok::Sym(c) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: char) -> Result<(), ParseError> {
        if self.eat(c) {
            Ok(())
        } else {
            Err(ParseError::syntax(self.at(), format!("`{c}`"), self.peek().to_string()))
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            if self.eat('+') {
                lhs = Expr::add(lhs, self.term()?);
            } else if self.eat('-') {
                lhs = Expr::sub(lhs, self.term()?);
            } else {
                return Ok(lhs);
            }
        }
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.factor()?;
        loop {
            if self.eat('*') {
                lhs = Expr::mul(lhs, self.factor()?);
            } else if self.eat('/') {
                lhs = Expr::div(lhs, self.factor()?);
            } else {
                return Ok(lhs);
            }
        }
    }

    fn factor(&mut self) -> Result<Expr, ParseError> {
        if self.eat('-') {
            return Ok(Expr::neg(self.factor()?));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.atom()?;
        if self.eat('^') {
            let exponent = self.factor()?;
            return Ok(Expr::pow(base, exponent));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        let at = self.at();
        match self.bump() {
            Tok::Num(q) => Ok(Expr::Const(q)),
            Tok::Ident(name) => {
                if self.peek() == &Tok::Sym('(') {
                    let func = self
                        .ctx
                        .function(&name)
                        .ok_or_else(|| ParseError::UnknownFunction(name.clone()))?;
                    self.bump();
                    let arg = self.expr()?;
                    self.expect(')')?;
                    Ok(Expr::func(func, arg))
                } else {
                    Ok(self.ctx.classify(&name))
                }
            }
            Tok::Sym('(') => {
                let inner = self.expr()?;
                self.expect(')')?;
                Ok(inner)
            }
            other => Err(ParseError::syntax(at, "number, identifier or `(`", other.to_string())),
        }
    }
}

fn parse_at(text: &str, offset: usize, ctx: &ParseContext) -> Result<Expr, ParseError> {
    let toks = lex(text, offset)?;
    let mut p = Parser { toks, pos: 0, ctx };
    let e = p.expr()?;
    if p.peek() != &Tok::End {
        return Err(ParseError::syntax(p.at(), "operator or end of input", p.peek().to_string()));
    }
    Ok(e)
}

/// Parses a standalone expression.
pub fn parse_expr(text: &str) -> Result<Expr, ParseError> {
    parse_at(text, 0, &ParseContext::standalone())
}

pub fn parse_expr_with(text: &str, ctx: &ParseContext) -> Result<Expr, ParseError> {
    parse_at(text, 0, ctx)
}

/// An ODE system `x_i' = f_i(t, x)`, equations kept in textual order.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct OdeSystem {
    equations: Vec<(String, Expr)>,
    params: BTreeSet<String>,
}

impl OdeSystem {
    /// Builds a system, checking that state variables are distinct and that
    /// every state variable in a right-hand side is declared.
    pub fn new(equations: Vec<(String, Expr)>) -> Result<Self, ParseError> {
        let mut seen = BTreeSet::new();
        for (name, _) in &equations {
            if name == "t" {
                return Err(ParseError::ReservedName(name.clone()));
            }
            if !seen.insert(name.clone()) {
                return Err(ParseError::DuplicateStateVar(name.clone()));
            }
        }
        let mut params = BTreeSet::new();
        for (_, rhs) in &equations {
            for sym in rhs.free_symbols() {
                match sym {
                    Symbol::State(n) if !seen.contains(&n) => {
                        return Err(ParseError::syntax(0, "declared state variable", format!("`{n}`")));
                    }
                    Symbol::Param(n) => {
                        params.insert(n);
                    }
                    _ => {}
                }
            }
        }
        Ok(OdeSystem { equations, params })
    }

    pub fn equations(&self) -> &[(String, Expr)] {
        &self.equations
    }

    pub fn dim(&self) -> usize {
        self.equations.len()
    }

    pub fn state_vars(&self) -> impl Iterator<Item = &str> {
        self.equations.iter().map(|(n, _)| n.as_str())
    }

    pub fn rhs(&self, var: &str) -> Option<&Expr> {
        self.equations.iter().find(|(n, _)| n == var).map(|(_, e)| e)
    }

    pub fn params(&self) -> &BTreeSet<String> {
        &self.params
    }

    pub fn init_consts(&self) -> Vec<String> {
        self.state_vars().map(init_name).collect()
    }

    /// Context for parsing solutions and assumptions about this system.
    pub fn context(&self) -> ParseContext {
        let mut ctx = ParseContext::with_states(self.state_vars());
        ctx.params = self.params.clone();
        ctx.inits = self.init_consts().into_iter().collect();
        ctx
    }

    /// The 1-dimensional system for one component, other state variables
    /// turned into parameters.
    pub fn projection(&self, var: &str) -> Option<OdeSystem> {
        let rhs = self.rhs(var)?;
        let mut b = std::collections::BTreeMap::new();
        for other in self.state_vars().filter(|v| *v != var) {
            b.insert(Symbol::State(other.to_string()), Expr::param(other));
        }
        OdeSystem::new(vec![(var.to_string(), rhs.substitute(&b))]).ok()
    }
}

impl fmt::Display for OdeSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, (name, rhs)) in self.equations.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{name}' = {rhs}")?;
        }
        Ok(())
    }
}

/// Splits on commas outside parentheses, returning (offset, piece).
pub(crate) fn split_top_level(text: &str, sep: char) -> Vec<(usize, &str)> {
    let mut out = Vec::new();
    let mut depth = 0i32;
    let mut start = 0;
    for (i, c) in text.char_indices() {
        match c {
            '(' => depth += 1,
            ')' => depth -= 1,
            c if c == sep && depth == 0 => {
                out.push((start, &text[start..i]));
                start = i + c.len_utf8();
            }
            _ => {}
        }
    }
    out.push((start, &text[start..]));
    out
}

fn parse_clause_head(clause: &str, offset: usize) -> Result<(String, usize), ParseError> {
    let trimmed_start = clause.len() - clause.trim_start().len();
    let body = &clause[trimmed_start..];
    let name_len = body
        .char_indices()
        .take_while(|(i, c)| {
            if *i == 0 {
                c.is_ascii_alphabetic()
            } else {
                c.is_ascii_alphanumeric() || *c == '_'
            }
        })
        .count();
    if name_len == 0 {
        return Err(ParseError::syntax(offset + trimmed_start, "state variable", found_at(body)));
    }
    let name = body[..name_len].to_string();
    let rest = &body[name_len..];
    let after_ws = rest.trim_start();
    let mut pos = offset + trimmed_start + name_len + (rest.len() - after_ws.len());
    let Some(rest) = after_ws.strip_prefix('\'') else {
        return Err(ParseError::syntax(pos, "`'`", found_at(after_ws)));
    };
    pos += 1;
    let after_ws = rest.trim_start();
    pos += rest.len() - after_ws.len();
    let Some(rest) = after_ws.strip_prefix('=') else {
        return Err(ParseError::syntax(pos, "`=`", found_at(after_ws)));
    };
    pos += 1;
    let _ = rest;
    Ok((name, pos - offset))
}

fn found_at(s: &str) -> String {
    s.chars()
        .next()
        .map(|c| format!("`{c}`"))
        .unwrap_or_else(|| "end of input".into())
}

/// Parses `x' = e1, y' = e2, ...`.
pub fn parse_system(text: &str) -> Result<OdeSystem, ParseError> {
    let clauses = split_top_level(text, ',');
    let mut heads = Vec::with_capacity(clauses.len());
    let mut names = BTreeSet::new();
    for (off, clause) in &clauses {
        let (name, rhs_start) = parse_clause_head(clause, *off)?;
        if name == "t" {
            return Err(ParseError::ReservedName(name));
        }
        if !names.insert(name.clone()) {
            return Err(ParseError::DuplicateStateVar(name));
        }
        heads.push((name, off + rhs_start));
    }
    let ctx = ParseContext::with_states(names.iter().cloned());
    let mut equations = Vec::with_capacity(heads.len());
    for ((name, rhs_off), (off, clause)) in heads.into_iter().zip(&clauses) {
        let rhs_text = &clause[rhs_off - off..];
        let rhs = parse_at(rhs_text, rhs_off, &ctx)?;
        equations.push((name, rhs));
    }
    OdeSystem::new(equations)
}

/// Parses a sign condition such as `b > 0`, `x0 != 0` or `1 - t^2 >= 0`.
pub fn parse_relation(text: &str, ctx: &ParseContext) -> Result<(Expr, Relation), ParseError> {
    let ops: [(&str, Relation); 6] = [
        (">=", Relation::NonNegative),
        ("!=", Relation::NonZero),
        ("<=", Relation::NonPositive),
        (">", Relation::Positive),
        ("<", Relation::Negative),
        ("~=", Relation::NonZero),
    ];
    for (op, rel) in ops {
        if let Some(idx) = text.find(op) {
            let lhs = parse_at(&text[..idx], 0, ctx)?;
            let rhs_off = idx + op.len();
            let rhs = parse_at(&text[rhs_off..], rhs_off, ctx)?;
            let diff = if rhs.is_zero() { lhs } else { Expr::sub(lhs, rhs) };
            return Ok(match rel {
                Relation::NonPositive => (Expr::neg(diff), Relation::NonNegative),
                Relation::Negative => (Expr::neg(diff), Relation::Positive),
                other => (diff, other),
            });
        }
    }
    Err(ParseError::syntax(text.len(), "`>`, `>=` or `!=`", "end of input"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Positive,
    NonNegative,
    NonZero,
    Negative,
    NonPositive,
}

/// Reads a numeric literal as an exact rational: integers, decimals and
/// `p/q` fractions, with an optional leading minus.
pub fn parse_rational(text: &str) -> Option<Rational> {
    let e = parse_expr(text).ok()?;
    e.as_rational()
}
