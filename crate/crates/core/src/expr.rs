//! Exact symbolic expressions over the independent variable `t`.
//!
//! Expressions are immutable trees. Numeric literals are exact rationals;
//! subtraction is represented as `Add(a, Neg(b))` so the node set stays small
//! and matches the operator count used for corpus classification.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};

pub type Rational = BigRational;

/// Build a rational from a small integer pair. Panics if `den == 0`.
pub fn rat(num: i64, den: i64) -> Rational {
    Rational::new(BigInt::from(num), BigInt::from(den))
}

/// A free symbol of an expression.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Symbol {
    /// The independent variable `t`.
    Time,
    State(String),
    Param(String),
    /// Initial value of a state variable, spelled `<var>0`.
    Init(String),
}

impl Symbol {
    pub fn name(&self) -> &str {
        match self {
            Symbol::Time => "t",
            Symbol::State(n) | Symbol::Param(n) | Symbol::Init(n) => n,
        }
    }

    fn rank(&self) -> u8 {
        match self {
            Symbol::Time => 0,
            Symbol::State(_) => 1,
            Symbol::Init(_) => 2,
            Symbol::Param(_) => 3,
        }
    }
}

// Ordered by name first so that monomial orders read alphabetically.
impl Ord for Symbol {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.name()
            .cmp(other.name())
            .then_with(|| self.rank().cmp(&other.rank()))
    }
}

impl PartialOrd for Symbol {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Func {
    Sin,
    Cos,
    Tan,
    Sqrt,
    Exp,
    Ln,
    Arcsin,
    /// A function outside the built-in alphabet. Only reachable through a
    /// parse context or rule set that declares it.
    Custom(Arc<str>),
}

impl Func {
    pub const BUILTIN: [Func; 7] = [
        Func::Sin,
        Func::Cos,
        Func::Tan,
        Func::Sqrt,
        Func::Exp,
        Func::Ln,
        Func::Arcsin,
    ];

    pub fn name(&self) -> &str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Tan => "tan",
            Func::Sqrt => "sqrt",
            Func::Exp => "exp",
            Func::Ln => "ln",
            Func::Arcsin => "arcsin",
            Func::Custom(name) => name,
        }
    }

    pub fn builtin(name: &str) -> Option<Func> {
        Func::BUILTIN.into_iter().find(|f| f.name() == name)
    }
}

impl fmt::Display for Func {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Expr {
    Const(Rational),
    Time,
    State(String),
    Param(String),
    Init(String),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, Box<Expr>),
    Func(Func, Box<Expr>),
    Tuple(Vec<Expr>),
}

pub type Valuation = BTreeMap<Symbol, Rational>;

#[allow(clippy::should_implement_trait)]
impl Expr {
    pub fn int(n: i64) -> Expr {
        Expr::Const(Rational::from_integer(BigInt::from(n)))
    }

    pub fn rational(q: Rational) -> Expr {
        Expr::Const(q)
    }

    pub fn zero() -> Expr {
        Expr::int(0)
    }

    pub fn one() -> Expr {
        Expr::int(1)
    }

    pub fn state(name: &str) -> Expr {
        Expr::State(name.to_string())
    }

    pub fn param(name: &str) -> Expr {
        Expr::Param(name.to_string())
    }

    pub fn init(name: &str) -> Expr {
        Expr::Init(name.to_string())
    }

    pub fn symbol(sym: &Symbol) -> Expr {
        match sym {
            Symbol::Time => Expr::Time,
            Symbol::State(n) => Expr::State(n.clone()),
            Symbol::Param(n) => Expr::Param(n.clone()),
            Symbol::Init(n) => Expr::Init(n.clone()),
        }
    }

    pub fn as_symbol(&self) -> Option<Symbol> {
        match self {
            Expr::Time => Some(Symbol::Time),
            Expr::State(n) => Some(Symbol::State(n.clone())),
            Expr::Param(n) => Some(Symbol::Param(n.clone())),
            Expr::Init(n) => Some(Symbol::Init(n.clone())),
            _ => None,
        }
    }

    pub fn neg(e: Expr) -> Expr {
        Expr::Neg(Box::new(e))
    }

    pub fn add(a: Expr, b: Expr) -> Expr {
        Expr::Add(Box::new(a), Box::new(b))
    }

    pub fn sub(a: Expr, b: Expr) -> Expr {
        Expr::Add(Box::new(a), Box::new(Expr::Neg(Box::new(b))))
    }

    pub fn mul(a: Expr, b: Expr) -> Expr {
        Expr::Mul(Box::new(a), Box::new(b))
    }

    pub fn div(a: Expr, b: Expr) -> Expr {
        Expr::Div(Box::new(a), Box::new(b))
    }

    pub fn pow(a: Expr, b: Expr) -> Expr {
        Expr::Pow(Box::new(a), Box::new(b))
    }

    pub fn func(f: Func, arg: Expr) -> Expr {
        Expr::Func(f, Box::new(arg))
    }

    /// Builds a tuple, flattening directly nested tuples. A single element is
    /// returned as-is.
    pub fn tuple(items: Vec<Expr>) -> Expr {
        let mut flat = Vec::with_capacity(items.len());
        for item in items {
            match item {
                Expr::Tuple(inner) => flat.extend(inner),
                other => flat.push(other),
            }
        }
        if flat.len() == 1 {
            flat.pop().unwrap()
        } else {
            Expr::Tuple(flat)
        }
    }

    /// Sum of the given terms, `0` when empty.
    pub fn sum(terms: impl IntoIterator<Item = Expr>) -> Expr {
        terms
            .into_iter()
            .reduce(|acc, e| match e {
                Expr::Neg(inner) => Expr::Add(Box::new(acc), Box::new(Expr::Neg(inner))),
                other => Expr::add(acc, other),
            })
            .unwrap_or_else(Expr::zero)
    }

    pub fn product(factors: impl IntoIterator<Item = Expr>) -> Expr {
        factors
            .into_iter()
            .reduce(Expr::mul)
            .unwrap_or_else(Expr::one)
    }

    pub fn children(&self) -> Vec<&Expr> {
        match self {
            Expr::Const(_)
            | Expr::Time
            | Expr::State(_)
            | Expr::Param(_)
            | Expr::Init(_) => vec![],
            Expr::Neg(a) | Expr::Func(_, a) => vec![a],
            Expr::Add(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) | Expr::Pow(a, b) => {
                vec![a, b]
            }
            Expr::Tuple(items) => items.iter().collect(),
        }
    }

    /// Subterm at a child-index path, if it exists.
    pub fn at_path(&self, path: &[usize]) -> Option<&Expr> {
        let mut cur = self;
        for &i in path {
            cur = *cur.children().get(i)?;
        }
        Some(cur)
    }

    pub fn is_const(&self) -> bool {
        matches!(self, Expr::Const(_))
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Expr::Const(q) if q.is_zero())
    }

    pub fn is_one(&self) -> bool {
        matches!(self, Expr::Const(q) if q.is_one())
    }

    pub fn node_count(&self) -> usize {
        1 + self.children().iter().map(|c| c.node_count()).sum::<usize>()
    }

    pub fn depth(&self) -> usize {
        1 + self
            .children()
            .iter()
            .map(|c| c.depth())
            .max()
            .unwrap_or(0)
    }

    pub fn free_symbols(&self) -> BTreeSet<Symbol> {
        let mut out = BTreeSet::new();
        self.collect_symbols(&mut out);
        out
    }

    fn collect_symbols(&self, out: &mut BTreeSet<Symbol>) {
        if let Some(sym) = self.as_symbol() {
            out.insert(sym);
            return;
        }
        for child in self.children() {
            child.collect_symbols(out);
        }
    }

    pub fn contains_symbol(&self, sym: &Symbol) -> bool {
        if let Some(s) = self.as_symbol() {
            return &s == sym;
        }
        self.children().iter().any(|c| c.contains_symbol(sym))
    }

    pub fn depends_on_time(&self) -> bool {
        self.contains_symbol(&Symbol::Time)
    }

    pub fn has_state_vars(&self) -> bool {
        match self {
            Expr::State(_) => true,
            _ => self.children().iter().any(|c| c.has_state_vars()),
        }
    }

    /// Number of operator nodes: additions, multiplications, divisions,
    /// powers and function applications. Unary minus and tuples are free.
    pub fn count_operators(&self) -> usize {
        let own = match self {
            Expr::Add(..) | Expr::Mul(..) | Expr::Div(..) | Expr::Pow(..) | Expr::Func(..) => 1,
            _ => 0,
        };
        own + self
            .children()
            .iter()
            .map(|c| c.count_operators())
            .sum::<usize>()
    }

    /// Simultaneous, capture-free replacement of symbols.
    pub fn substitute(&self, bindings: &BTreeMap<Symbol, Expr>) -> Expr {
        if let Some(sym) = self.as_symbol() {
            return bindings.get(&sym).cloned().unwrap_or_else(|| self.clone());
        }
        self.map_children(|c| c.substitute(bindings))
    }

    pub fn substitute_one(&self, sym: &Symbol, value: &Expr) -> Expr {
        let mut b = BTreeMap::new();
        b.insert(sym.clone(), value.clone());
        self.substitute(&b)
    }

    /// Rebuilds this node with each child transformed by `f`.
    pub fn map_children(&self, mut f: impl FnMut(&Expr) -> Expr) -> Expr {
        match self {
            Expr::Const(_)
            | Expr::Time
            | Expr::State(_)
            | Expr::Param(_)
            | Expr::Init(_) => self.clone(),
            Expr::Neg(a) => Expr::Neg(Box::new(f(a))),
            Expr::Add(a, b) => Expr::Add(Box::new(f(a)), Box::new(f(b))),
            Expr::Mul(a, b) => Expr::Mul(Box::new(f(a)), Box::new(f(b))),
            Expr::Div(a, b) => Expr::Div(Box::new(f(a)), Box::new(f(b))),
            Expr::Pow(a, b) => Expr::Pow(Box::new(f(a)), Box::new(f(b))),
            Expr::Func(k, a) => Expr::Func(k.clone(), Box::new(f(a))),
            Expr::Tuple(items) => Expr::Tuple(items.iter().map(f).collect()),
        }
    }

    /// Exact value of a symbol-free expression built from rational
    /// arithmetic and integer powers. `None` if any other node occurs or a
    /// division by zero is hit.
    pub fn as_rational(&self) -> Option<Rational> {
        match self {
            Expr::Const(q) => Some(q.clone()),
            Expr::Neg(a) => Some(-a.as_rational()?),
            Expr::Add(a, b) => Some(a.as_rational()? + b.as_rational()?),
            Expr::Mul(a, b) => Some(a.as_rational()? * b.as_rational()?),
            Expr::Div(a, b) => {
                let d = b.as_rational()?;
                if d.is_zero() {
                    None
                } else {
                    Some(a.as_rational()? / d)
                }
            }
            Expr::Pow(a, b) => {
                let base = a.as_rational()?;
                let exp = b.as_rational()?;
                if !exp.is_integer() {
                    return None;
                }
                let n: i32 = exp.to_integer().try_into().ok()?;
                if n.unsigned_abs() > 4096 || (n < 0 && base.is_zero()) {
                    return None;
                }
                Some(num_traits::pow::Pow::pow(&base, n))
            }
            _ => None,
        }
    }
}

impl From<i64> for Expr {
    fn from(n: i64) -> Self {
        Expr::int(n)
    }
}

impl From<Rational> for Expr {
    fn from(q: Rational) -> Self {
        Expr::Const(q)
    }
}

impl std::ops::Add for Expr {
    type Output = Expr;
    fn add(self, rhs: Expr) -> Expr {
        Expr::add(self, rhs)
    }
}

impl std::ops::Sub for Expr {
    type Output = Expr;
    fn sub(self, rhs: Expr) -> Expr {
        Expr::sub(self, rhs)
    }
}

impl std::ops::Mul for Expr {
    type Output = Expr;
    fn mul(self, rhs: Expr) -> Expr {
        Expr::mul(self, rhs)
    }
}

impl std::ops::Div for Expr {
    type Output = Expr;
    fn div(self, rhs: Expr) -> Expr {
        Expr::div(self, rhs)
    }
}

impl std::ops::Neg for Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        Expr::neg(self)
    }
}

// Printing. Levels follow the grammar: sums < products < unary minus <
// powers < atoms. The output re-parses to the same tree except for negative
// and fractional constants, which re-parse to their arithmetic spelling.
const ADD: u8 = 1;
const MUL: u8 = 2;
const NEG: u8 = 3;
const POW: u8 = 4;
const ATOM: u8 = 5;

fn level(e: &Expr) -> u8 {
    match e {
        Expr::Const(q) => {
            if !q.is_integer() {
                MUL
            } else if q.is_negative() {
                NEG
            } else {
                ATOM
            }
        }
        Expr::Add(..) => ADD,
        Expr::Mul(..) | Expr::Div(..) => MUL,
        Expr::Neg(_) => NEG,
        Expr::Pow(..) => POW,
        _ => ATOM,
    }
}

fn write_at(f: &mut fmt::Formatter<'_>, e: &Expr, min: u8) -> fmt::Result {
    if level(e) < min {
        write!(f, "(")?;
        write_expr(f, e)?;
        write!(f, ")")
    } else {
        write_expr(f, e)
    }
}

fn write_expr(f: &mut fmt::Formatter<'_>, e: &Expr) -> fmt::Result {
    match e {
        Expr::Const(q) => {
            if q.is_integer() {
                write!(f, "{}", q.numer())
            } else {
                write!(f, "{}/{}", q.numer(), q.denom())
            }
        }
        Expr::Time => write!(f, "t"),
        Expr::State(n) | Expr::Param(n) | Expr::Init(n) => write!(f, "{n}"),
        Expr::Neg(a) => {
            write!(f, "-")?;
            write_at(f, a, NEG)
        }
        Expr::Add(a, b) => {
            write_at(f, a, ADD)?;
            match b.as_ref() {
                Expr::Neg(inner) => {
                    write!(f, " - ")?;
                    write_at(f, inner, MUL)
                }
                Expr::Const(q) if q.is_negative() => {
                    write!(f, " - ")?;
                    write_expr(f, &Expr::Const(-q))
                }
                other => {
                    write!(f, " + ")?;
                    write_at(f, other, MUL)
                }
            }
        }
        Expr::Mul(a, b) => {
            write_at(f, a, MUL)?;
            write!(f, "*")?;
            write_at(f, b, POW)
        }
        Expr::Div(a, b) => {
            write_at(f, a, MUL)?;
            write!(f, "/")?;
            write_at(f, b, POW)
        }
        Expr::Pow(a, b) => {
            write_at(f, a, ATOM)?;
            write!(f, "^")?;
            write_at(f, b, NEG)
        }
        Expr::Func(k, a) => {
            write!(f, "{k}(")?;
            write_expr(f, a)?;
            write!(f, ")")
        }
        Expr::Tuple(items) => {
            write!(f, "(")?;
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    write!(f, ", ")?;
                }
                write_expr(f, item)?;
            }
            write!(f, ")")
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_expr(f, self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t() -> Expr {
        Expr::Time
    }

    #[test]
    fn free_symbols_of_solution_component() {
        let e = Expr::pow(t(), Expr::int(2)) / Expr::int(2) + Expr::init("x0");
        let syms = e.free_symbols();
        assert_eq!(
            syms.into_iter().collect::<Vec<_>>(),
            vec![Symbol::Time, Symbol::Init("x0".into())]
        );
        assert!(Expr::int(6).free_symbols().is_empty());
    }

    #[test]
    fn free_symbols_of_assumption_example() {
        // c + b*(u - x)
        let e = Expr::param("c")
            + Expr::param("b") * (Expr::param("u") - Expr::state("x"));
        let names: Vec<String> = e
            .free_symbols()
            .iter()
            .map(|s| s.name().to_string())
            .collect();
        assert_eq!(names, vec!["b", "c", "u", "x"]);
    }

    #[test]
    fn operator_counts() {
        assert_eq!(Expr::neg(Expr::param("g")).count_operators(), 0);
        assert_eq!(t().count_operators(), 0);
        let fx = Expr::param("fx");
        let e = fx * (Expr::param("K") * Expr::param("qx")) / Expr::param("D");
        assert_eq!(e.count_operators(), 3);
        let e2 = Expr::param("fx") * (Expr::param("qx") / Expr::param("D"));
        assert_eq!(e2.count_operators(), 2);
        let sub = t() - Expr::int(1);
        assert_eq!(sub.count_operators(), 1);
    }

    #[test]
    fn substitute_examples() {
        let x = Expr::state("x");
        let sol = Expr::pow(t(), Expr::int(2)) / Expr::int(2) + Expr::init("x0");
        let mut b = BTreeMap::new();
        b.insert(Symbol::State("x".into()), sol.clone());
        assert_eq!((x.clone() + t()).substitute(&b), sol.clone() + t());
        assert_eq!(Expr::param("c").substitute(&b), Expr::param("c"));

        let cube = Expr::pow(t(), Expr::int(3)) / Expr::int(6);
        let mut b2 = BTreeMap::new();
        b2.insert(Symbol::State("x".into()), cube.clone());
        let tup = Expr::tuple(vec![t(), x, Expr::one()]);
        assert_eq!(
            tup.substitute(&b2),
            Expr::Tuple(vec![t(), cube, Expr::one()])
        );
    }

    #[test]
    fn substitution_is_simultaneous() {
        let mut b = BTreeMap::new();
        b.insert(Symbol::State("x".into()), Expr::state("y"));
        b.insert(Symbol::State("y".into()), Expr::state("x"));
        let e = Expr::state("x") - Expr::state("y");
        assert_eq!(e.substitute(&b), Expr::state("y") - Expr::state("x"));
    }

    #[test]
    fn tuples_flatten() {
        let inner = Expr::tuple(vec![t(), Expr::one()]);
        let outer = Expr::tuple(vec![inner, Expr::zero()]);
        assert_eq!(outer, Expr::Tuple(vec![t(), Expr::one(), Expr::zero()]));
        assert_eq!(Expr::tuple(vec![t()]), t());
    }

    #[test]
    fn printing() {
        let e = Expr::pow(t(), Expr::int(2)) / Expr::int(2) + Expr::init("x0");
        assert_eq!(e.to_string(), "t^2/2 + x0");
        let e = Expr::neg(Expr::pow(t(), Expr::int(3)))
            * (Expr::div(Expr::one(), Expr::int(6)) * Expr::zero() * Expr::div(Expr::one(), Expr::int(6)));
        assert_eq!(e.to_string(), "-t^3*(1/6*0*(1/6))");
        let e = Expr::pow(t(), Expr::int(3) - Expr::one());
        assert_eq!(e.to_string(), "t^(3 - 1)");
        assert_eq!(Expr::Const(rat(-3, 4)).to_string(), "-3/4");
        assert_eq!(
            Expr::pow(Expr::Const(rat(1, 5)), t()).to_string(),
            "(1/5)^t"
        );
    }

    #[test]
    fn as_rational_folds_constants() {
        let e = Expr::div(Expr::int(1), Expr::int(6)) + Expr::pow(Expr::int(2), Expr::int(-1));
        assert_eq!(e.as_rational(), Some(rat(2, 3)));
        assert_eq!(Expr::div(Expr::one(), Expr::zero()).as_rational(), None);
        assert_eq!(t().as_rational(), None);
    }
}
