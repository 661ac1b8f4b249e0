//! Rule-driven differentiation with respect to `t`.
//!
//! Each node is handled by exactly one rule, which emits its derivative in
//! unsimplified form together with the side conditions it needs. Cleanup is
//! left to [`crate::canon`]. The rules for the seven built-in functions live
//! in a [`RuleSet`] so they can be removed or extended.

use std::collections::BTreeMap;
use std::fmt;

use num_traits::{Signed, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{Expr, Func, Symbol};
use crate::parser::{parse_expr_with, ParseContext, ParseError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Shape {
    NonZero,
    Positive,
    NonNegative,
}

impl Shape {
    pub fn relation(self) -> &'static str {
        match self {
            Shape::NonZero => "!=",
            Shape::Positive => ">",
            Shape::NonNegative => ">=",
        }
    }

    /// `self` holding for an expression implies `other` holds for it.
    pub fn implies(self, other: Shape) -> bool {
        self == other || (self == Shape::Positive)
    }
}

/// A sign obligation on an expression.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Condition {
    pub shape: Shape,
    pub expr: Expr,
}

impl Condition {
    pub fn new(shape: Shape, expr: Expr) -> Self {
        Condition { shape, expr }
    }

    pub fn nonzero(expr: Expr) -> Self {
        Condition::new(Shape::NonZero, expr)
    }

    pub fn positive(expr: Expr) -> Self {
        Condition::new(Shape::Positive, expr)
    }

    pub fn nonnegative(expr: Expr) -> Self {
        Condition::new(Shape::NonNegative, expr)
    }

    pub fn substitute(&self, bindings: &BTreeMap<Symbol, Expr>) -> Self {
        Condition::new(self.shape, self.expr.substitute(bindings))
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} 0", self.expr, self.shape.relation())
    }
}

/// Where a side condition came from: the rule and its index in the trace.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Origin {
    pub rule: String,
    pub step: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SideCondition {
    pub condition: Condition,
    pub origin: Origin,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceStep {
    pub rule: String,
    /// Child indices from the root of the differentiated body.
    pub path: Vec<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RuleTrace {
    pub steps: Vec<TraceStep>,
}

impl RuleTrace {
    pub fn rule_ids(&self) -> Vec<&str> {
        self.steps.iter().map(|s| s.rule.as_str()).collect()
    }
}

impl fmt::Display for RuleTrace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let ids = self.rule_ids();
        write!(f, "[{}]", ids.join(", "))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DerivError {
    #[error("no derivative rule for `{0}`")]
    NoRule(String),
    #[error("state variable `{0}` in a closed-form body")]
    StateVariable(String),
    #[error("rule `{0}` is already registered")]
    DuplicateRule(String),
    #[error("invalid rule template: {0}")]
    Template(#[from] ParseError),
    #[error("trace does not match the body at step {0}")]
    TraceMismatch(usize),
}

/// Chain-rule entry for a unary function `g`: `(g(f))' = f' * template[u := f]`.
#[derive(Debug, Clone)]
pub struct FunctionRule {
    pub id: String,
    pub func: Func,
    /// Outer derivative in the placeholder [`ARG`].
    pub template: Expr,
    pub conditions: Vec<Condition>,
}

/// Placeholder name used by rule templates for the function argument.
pub const ARG: &str = "u";

fn arg_placeholder() -> Expr {
    Expr::Param(ARG.to_string())
}

impl FunctionRule {
    fn instantiate(&self, arg: &Expr) -> (Expr, Vec<Condition>) {
        let sym = Symbol::Param(ARG.to_string());
        let outer = self.template.substitute_one(&sym, arg);
        let conds = self
            .conditions
            .iter()
            .map(|c| Condition::new(c.shape, c.expr.substitute_one(&sym, arg)))
            .collect();
        (outer, conds)
    }
}

const STRUCTURAL: [&str; 8] = ["const", "id", "pair", "add", "mul", "pow", "div", "neg"];

/// The set of function rules in force. Structural rules (constants, `t`,
/// tuples, sums, products, powers, quotients, negation) are always present.
#[derive(Debug, Clone)]
pub struct RuleSet {
    functions: BTreeMap<Func, FunctionRule>,
}

impl Default for RuleSet {
    fn default() -> Self {
        RuleSet::standard()
    }
}

impl RuleSet {
    pub fn empty() -> Self {
        RuleSet {
            functions: BTreeMap::new(),
        }
    }

    /// Rules for sin, cos, tan, exp, ln, arcsin and sqrt.
    pub fn standard() -> Self {
        let u = arg_placeholder;
        let mut rs = RuleSet::empty();
        let std_rules = [
            ("sin", Func::Sin, Expr::func(Func::Cos, u()), vec![]),
            (
                "cos",
                Func::Cos,
                Expr::neg(Expr::func(Func::Sin, u())),
                vec![],
            ),
            (
                "tan",
                Func::Tan,
                Expr::div(Expr::one(), Expr::pow(Expr::func(Func::Cos, u()), Expr::int(2))),
                vec![Condition::nonzero(Expr::func(Func::Cos, u()))],
            ),
            ("exp", Func::Exp, Expr::func(Func::Exp, u()), vec![]),
            (
                "ln",
                Func::Ln,
                Expr::div(Expr::one(), u()),
                vec![Condition::positive(u())],
            ),
            (
                "arcsin",
                Func::Arcsin,
                Expr::div(
                    Expr::one(),
                    Expr::func(Func::Sqrt, Expr::sub(Expr::one(), Expr::pow(u(), Expr::int(2)))),
                ),
                vec![Condition::positive(Expr::sub(
                    Expr::one(),
                    Expr::pow(u(), Expr::int(2)),
                ))],
            ),
            (
                "sqrt",
                Func::Sqrt,
                Expr::div(Expr::one(), Expr::mul(Expr::int(2), Expr::func(Func::Sqrt, u()))),
                vec![Condition::positive(u())],
            ),
        ];
        for (id, func, template, conditions) in std_rules {
            rs.register(id, func, template, conditions)
                .expect("standard rules are distinct");
        }
        rs
    }

    pub fn contains(&self, id: &str) -> bool {
        STRUCTURAL.contains(&id) || self.functions.values().any(|r| r.id == id)
    }

    pub fn rule_for(&self, func: &Func) -> Option<&FunctionRule> {
        self.functions.get(func)
    }

    fn rule_by_id(&self, id: &str) -> Option<&FunctionRule> {
        self.functions.values().find(|r| r.id == id)
    }

    /// Adds a chain-rule entry. `template` is the outer derivative written in
    /// the placeholder parameter [`ARG`].
    pub fn register(
        &mut self,
        id: &str,
        func: Func,
        template: Expr,
        conditions: Vec<Condition>,
    ) -> Result<(), DerivError> {
        if self.contains(id) || self.functions.contains_key(&func) {
            return Err(DerivError::DuplicateRule(id.to_string()));
        }
        self.functions.insert(
            func.clone(),
            FunctionRule {
                id: id.to_string(),
                func,
                template,
                conditions,
            },
        );
        Ok(())
    }

    /// Like [`RuleSet::register`], reading the template and conditions from
    /// text in which `u` stands for the argument, e.g.
    /// `register_text("cosh", "cosh", "sinh(u)", &[])`.
    pub fn register_text(
        &mut self,
        id: &str,
        func_name: &str,
        template: &str,
        conditions: &[(Shape, &str)],
    ) -> Result<(), DerivError> {
        let func = Func::builtin(func_name).unwrap_or_else(|| Func::Custom(func_name.into()));
        let mut ctx = ParseContext::from_symbols([&Symbol::Param(ARG.to_string())]);
        for name in self
            .functions
            .keys()
            .chain(std::iter::once(&func))
            .filter_map(|f| match f {
                Func::Custom(n) => Some(n.to_string()),
                _ => None,
            })
        {
            ctx = ctx.allow_function(name);
        }
        // Templates may mention companion functions that have no rule yet.
        let ctx = allow_all_identifiers(template, ctx);
        let template = parse_expr_with(template, &ctx)?;
        let conditions = conditions
            .iter()
            .map(|(shape, text)| Ok(Condition::new(*shape, parse_expr_with(text, &ctx)?)))
            .collect::<Result<Vec<_>, ParseError>>()?;
        self.register(id, func, template, conditions)
    }

    pub fn remove(&mut self, id: &str) -> Option<FunctionRule> {
        let key = self
            .functions
            .iter()
            .find(|(_, r)| r.id == id)
            .map(|(k, _)| k.clone())?;
        self.functions.remove(&key)
    }

    pub fn ids(&self) -> Vec<String> {
        STRUCTURAL
            .iter()
            .map(|s| s.to_string())
            .chain(self.functions.values().map(|r| r.id.clone()))
            .collect()
    }
}

fn allow_all_identifiers(text: &str, mut ctx: ParseContext) -> ParseContext {
    let bytes = text.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i].is_ascii_alphabetic() {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            let name = &text[start..i];
            let followed_by_paren = text[i..].trim_start().starts_with('(');
            if followed_by_paren && Func::builtin(name).is_none() {
                ctx = ctx.allow_function(name);
            }
        } else {
            i += 1;
        }
    }
    ctx
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Derivative {
    pub derivative: Expr,
    pub conditions: Vec<SideCondition>,
    pub trace: RuleTrace,
}

struct Differentiator<'a> {
    rules: &'a RuleSet,
    trace: RuleTrace,
    conditions: Vec<SideCondition>,
}

impl Differentiator<'_> {
    fn step(&mut self, rule: &str, path: &[usize]) -> usize {
        self.trace.steps.push(TraceStep {
            rule: rule.to_string(),
            path: path.to_vec(),
        });
        self.trace.steps.len() - 1
    }

    fn require(&mut self, cond: Condition, rule: &str, step: usize) {
        self.conditions.push(SideCondition {
            condition: cond,
            origin: Origin {
                rule: rule.to_string(),
                step,
            },
        });
    }

    fn child(&mut self, e: &Expr, path: &mut Vec<usize>, idx: usize) -> Result<Expr, DerivError> {
        path.push(idx);
        let d = self.go(e, path);
        path.pop();
        d
    }

    fn go(&mut self, e: &Expr, path: &mut Vec<usize>) -> Result<Expr, DerivError> {
        match e {
            Expr::Const(_) | Expr::Param(_) | Expr::Init(_) => {
                self.step("const", path);
                Ok(Expr::zero())
            }
            Expr::Time => {
                self.step("id", path);
                Ok(Expr::one())
            }
            Expr::State(n) => Err(DerivError::StateVariable(n.clone())),
            Expr::Tuple(items) => {
                self.step("pair", path);
                let mut out = Vec::with_capacity(items.len());
                for (i, item) in items.iter().enumerate() {
                    out.push(self.child(item, path, i)?);
                }
                Ok(Expr::Tuple(out))
            }
            Expr::Neg(a) => {
                self.step("neg", path);
                Ok(Expr::neg(self.child(a, path, 0)?))
            }
            Expr::Add(a, b) => {
                self.step("add", path);
                let da = self.child(a, path, 0)?;
                let db = self.child(b, path, 1)?;
                Ok(Expr::add(da, db))
            }
            Expr::Mul(a, b) => {
                self.step("mul", path);
                let da = self.child(a, path, 0)?;
                let db = self.child(b, path, 1)?;
                Ok(product_rule(a, b, da, db))
            }
            Expr::Div(a, b) => {
                let step = self.step("div", path);
                self.require(Condition::nonzero((**b).clone()), "div", step);
                let da = self.child(a, path, 0)?;
                let db = self.child(b, path, 1)?;
                Ok(quotient_rule(a, b, da, db))
            }
            Expr::Pow(base, exponent) => {
                let step = self.step("pow", path);
                match power_kind(exponent) {
                    PowerKind::Zero => Ok(Expr::zero()),
                    PowerKind::Natural => {
                        let db = self.child(base, path, 0)?;
                        Ok(power_rule(base, exponent, db))
                    }
                    PowerKind::NegativeInteger => {
                        self.require(Condition::nonzero((**base).clone()), "pow", step);
                        let db = self.child(base, path, 0)?;
                        Ok(power_rule(base, exponent, db))
                    }
                    PowerKind::Fractional => {
                        self.require(Condition::positive((**base).clone()), "pow", step);
                        let db = self.child(base, path, 0)?;
                        Ok(power_rule(base, exponent, db))
                    }
                    PowerKind::General => {
                        self.require(Condition::positive((**base).clone()), "pow", step);
                        let db = self.child(base, path, 0)?;
                        let de = self.child(exponent, path, 1)?;
                        Ok(general_power_rule(base, exponent, db, de))
                    }
                }
            }
            Expr::Func(func, arg) => {
                let rule = self
                    .rules
                    .rule_for(func)
                    .ok_or_else(|| DerivError::NoRule(func.name().to_string()))?
                    .clone();
                let step = self.step(&rule.id, path);
                let (outer, conds) = rule.instantiate(arg);
                for c in conds {
                    self.require(c, &rule.id, step);
                }
                let da = self.child(arg, path, 0)?;
                Ok(Expr::mul(da, outer))
            }
        }
    }
}

enum PowerKind {
    Zero,
    Natural,
    NegativeInteger,
    Fractional,
    General,
}

fn power_kind(exponent: &Expr) -> PowerKind {
    match exponent.as_rational() {
        Some(q) if q.is_zero() => PowerKind::Zero,
        Some(q) if q.is_integer() && q.is_positive() => PowerKind::Natural,
        Some(q) if q.is_integer() => PowerKind::NegativeInteger,
        Some(_) => PowerKind::Fractional,
        None => PowerKind::General,
    }
}

/// `f*g -> f*g' + f'*g`
fn product_rule(f: &Expr, g: &Expr, df: Expr, dg: Expr) -> Expr {
    Expr::add(Expr::mul(f.clone(), dg), Expr::mul(df, g.clone()))
}

/// `f/g -> -f*(1/g*g'*1/g) + f'/g`
fn quotient_rule(f: &Expr, g: &Expr, df: Expr, dg: Expr) -> Expr {
    let inv = || Expr::div(Expr::one(), g.clone());
    Expr::add(
        Expr::mul(Expr::neg(f.clone()), Expr::mul(Expr::mul(inv(), dg), inv())),
        Expr::div(df, g.clone()),
    )
}

/// `f^r -> r*f'*f^(r - 1)` for constant `r`.
fn power_rule(f: &Expr, r: &Expr, df: Expr) -> Expr {
    Expr::mul(
        Expr::mul(r.clone(), df),
        Expr::pow(f.clone(), Expr::sub(r.clone(), Expr::one())),
    )
}

/// `f^g` differentiated as `exp(g*ln(f))`:
/// `(g*(f'*(1/f)) + g'*ln(f)) * exp(g*ln(f))`.
fn general_power_rule(f: &Expr, g: &Expr, df: Expr, dg: Expr) -> Expr {
    let ln_f = Expr::func(Func::Ln, f.clone());
    let inner = Expr::add(
        Expr::mul(g.clone(), Expr::mul(df, Expr::div(Expr::one(), f.clone()))),
        Expr::mul(dg, ln_f.clone()),
    );
    Expr::mul(inner, Expr::func(Func::Exp, Expr::mul(g.clone(), ln_f)))
}

/// Differentiates a closed-form body in `t` with the standard rules.
pub fn differentiate(body: &Expr) -> Result<Derivative, DerivError> {
    differentiate_with(body, &RuleSet::standard())
}

pub fn differentiate_with(body: &Expr, rules: &RuleSet) -> Result<Derivative, DerivError> {
    let mut d = Differentiator {
        rules,
        trace: RuleTrace::default(),
        conditions: Vec::new(),
    };
    let derivative = d.go(body, &mut Vec::new())?;
    Ok(Derivative {
        derivative,
        conditions: d.conditions,
        trace: d.trace,
    })
}

/// Rebuilds a derivative by following `trace` instead of choosing rules.
pub fn replay(body: &Expr, trace: &RuleTrace, rules: &RuleSet) -> Result<Expr, DerivError> {
    let mut cursor = 0;
    let out = replay_node(body, &mut Vec::new(), trace, &mut cursor, rules)?;
    if cursor != trace.steps.len() {
        return Err(DerivError::TraceMismatch(cursor));
    }
    Ok(out)
}

fn replay_node(
    e: &Expr,
    path: &mut Vec<usize>,
    trace: &RuleTrace,
    cursor: &mut usize,
    rules: &RuleSet,
) -> Result<Expr, DerivError> {
    let idx = *cursor;
    let step = trace.steps.get(idx).ok_or(DerivError::TraceMismatch(idx))?;
    if step.path != *path {
        return Err(DerivError::TraceMismatch(idx));
    }
    *cursor += 1;
    let mismatch = || DerivError::TraceMismatch(idx);
    let mut sub = |child: &Expr, i: usize, cursor: &mut usize| -> Result<Expr, DerivError> {
        path.push(i);
        let r = replay_node(child, path, trace, cursor, rules);
        path.pop();
        r
    };
    match (step.rule.as_str(), e) {
        ("const", Expr::Const(_) | Expr::Param(_) | Expr::Init(_)) => Ok(Expr::zero()),
        ("id", Expr::Time) => Ok(Expr::one()),
        ("pair", Expr::Tuple(items)) => {
            let mut out = Vec::new();
            for (i, item) in items.iter().enumerate() {
                out.push(sub(item, i, cursor)?);
            }
            Ok(Expr::Tuple(out))
        }
        ("neg", Expr::Neg(a)) => Ok(Expr::neg(sub(a, 0, cursor)?)),
        ("add", Expr::Add(a, b)) => {
            let da = sub(a, 0, cursor)?;
            let db = sub(b, 1, cursor)?;
            Ok(Expr::add(da, db))
        }
        ("mul", Expr::Mul(a, b)) => {
            let da = sub(a, 0, cursor)?;
            let db = sub(b, 1, cursor)?;
            Ok(product_rule(a, b, da, db))
        }
        ("div", Expr::Div(a, b)) => {
            let da = sub(a, 0, cursor)?;
            let db = sub(b, 1, cursor)?;
            Ok(quotient_rule(a, b, da, db))
        }
        ("pow", Expr::Pow(base, exponent)) => match power_kind(exponent) {
            PowerKind::Zero => Ok(Expr::zero()),
            PowerKind::General => {
                let db = sub(base, 0, cursor)?;
                let de = sub(exponent, 1, cursor)?;
                Ok(general_power_rule(base, exponent, db, de))
            }
            _ => {
                let db = sub(base, 0, cursor)?;
                Ok(power_rule(base, exponent, db))
            }
        },
        (id, Expr::Func(func, arg)) => {
            let rule = rules.rule_by_id(id).ok_or_else(mismatch)?;
            if &rule.func != func {
                return Err(mismatch());
            }
            let (outer, _) = rule.instantiate(arg);
            let da = sub(arg, 0, cursor)?;
            Ok(Expr::mul(da, outer))
        }
        _ => Err(mismatch()),
    }
}

/// Conditions under which `e` itself is defined: nonzero denominators,
/// non-negative square-root arguments, positive logarithm arguments and
/// bases of fractional or symbolic powers, `arcsin` arguments in range,
/// and `tan` away from its poles.
pub fn definedness_conditions(e: &Expr) -> Vec<Condition> {
    let mut out = Vec::new();
    collect_definedness(e, &mut out);
    out
}

fn collect_definedness(e: &Expr, out: &mut Vec<Condition>) {
    for c in e.children() {
        collect_definedness(c, out);
    }
    match e {
        Expr::Div(_, b) => out.push(Condition::nonzero((**b).clone())),
        Expr::Pow(base, exponent) => match power_kind(exponent) {
            PowerKind::NegativeInteger => out.push(Condition::nonzero((**base).clone())),
            PowerKind::Fractional => out.push(Condition::nonnegative((**base).clone())),
            PowerKind::General => out.push(Condition::positive((**base).clone())),
            PowerKind::Zero | PowerKind::Natural => {}
        },
        Expr::Func(Func::Sqrt, a) => out.push(Condition::nonnegative((**a).clone())),
        Expr::Func(Func::Ln, a) => out.push(Condition::positive((**a).clone())),
        Expr::Func(Func::Arcsin, a) => out.push(Condition::nonnegative(Expr::sub(
            Expr::one(),
            Expr::pow((**a).clone(), Expr::int(2)),
        ))),
        Expr::Func(Func::Tan, a) => out.push(Condition::nonzero(Expr::func(Func::Cos, (**a).clone()))),
        _ => {}
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::parse_expr;

    fn t() -> Expr {
        Expr::Time
    }

    fn conds(d: &Derivative) -> Vec<Condition> {
        d.conditions.iter().map(|c| c.condition.clone()).collect()
    }

    #[test]
    fn rule_a_constant() {
        let d = differentiate(&Expr::param("c")).unwrap();
        assert_eq!(d.derivative, Expr::zero());
        assert!(d.conditions.is_empty());
        assert_eq!(d.trace.rule_ids(), vec!["const"]);
    }

    #[test]
    fn rule_b_identity() {
        let d = differentiate(&t()).unwrap();
        assert_eq!(d.derivative, Expr::one());
        assert!(d.conditions.is_empty());
        assert_eq!(d.trace.rule_ids(), vec!["id"]);
    }

    #[test]
    fn rule_c_pairs_componentwise() {
        let d = differentiate(&Expr::Tuple(vec![t(), Expr::param("c")])).unwrap();
        assert_eq!(d.derivative, Expr::Tuple(vec![Expr::one(), Expr::zero()]));
        assert!(d.conditions.is_empty());
        assert_eq!(d.trace.rule_ids(), vec!["pair", "id", "const"]);
    }

    #[test]
    fn rule_d_sum() {
        let d = differentiate(&(t() + Expr::param("c"))).unwrap();
        assert_eq!(d.derivative, Expr::add(Expr::one(), Expr::zero()));
        assert!(d.conditions.is_empty());
        assert_eq!(d.trace.rule_ids(), vec!["add", "id", "const"]);
    }

    #[test]
    fn rule_e_sine() {
        let d = differentiate(&Expr::func(Func::Sin, t())).unwrap();
        assert_eq!(
            d.derivative,
            Expr::mul(Expr::one(), Expr::func(Func::Cos, t()))
        );
        assert!(d.conditions.is_empty());
        assert_eq!(d.trace.rule_ids(), vec!["sin", "id"]);
    }

    #[test]
    fn rule_f_square_root() {
        let d = differentiate(&Expr::func(Func::Sqrt, t())).unwrap();
        assert_eq!(
            d.derivative,
            Expr::mul(
                Expr::one(),
                Expr::div(Expr::one(), Expr::mul(Expr::int(2), Expr::func(Func::Sqrt, t())))
            )
        );
        assert_eq!(d.derivative.to_string(), "1*(1/(2*sqrt(t)))");
        assert_eq!(conds(&d), vec![Condition::positive(t())]);
        assert_eq!(d.trace.rule_ids(), vec!["sqrt", "id"]);
        assert_eq!(d.conditions[0].origin, Origin { rule: "sqrt".into(), step: 0 });
    }

    #[test]
    fn rule_g_quotient_reproduces_cubic_residual() {
        let body = parse_expr("t^3/6").unwrap();
        let d = differentiate(&body).unwrap();
        let six = || Expr::int(6);
        let inv6 = || Expr::div(Expr::one(), six());
        let expected = Expr::add(
            Expr::mul(
                Expr::neg(Expr::pow(t(), Expr::int(3))),
                Expr::mul(Expr::mul(inv6(), Expr::zero()), inv6()),
            ),
            Expr::div(
                Expr::mul(
                    Expr::mul(Expr::int(3), Expr::one()),
                    Expr::pow(t(), Expr::sub(Expr::int(3), Expr::one())),
                ),
                six(),
            ),
        );
        assert_eq!(d.derivative, expected);
        assert_eq!(
            d.derivative.to_string(),
            "-t^3*(1/6*0*(1/6)) + 3*1*t^(3 - 1)/6"
        );
        assert_eq!(conds(&d), vec![Condition::nonzero(six())]);
        assert_eq!(d.trace.rule_ids(), vec!["div", "pow", "id", "const"]);
    }

    #[test]
    fn each_division_yields_one_nonzero() {
        let body = parse_expr("1/t + t/(t + 1)").unwrap();
        let d = differentiate(&body).unwrap();
        let nz: Vec<_> = conds(&d)
            .into_iter()
            .filter(|c| c.shape == Shape::NonZero)
            .collect();
        assert_eq!(nz, vec![Condition::nonzero(t()), Condition::nonzero(t() + Expr::one())]);
    }

    #[test]
    fn extended_rules() {
        let cases = [
            ("cos(t)", "1*(-sin(t))", vec![]),
            ("exp(2*t)", "(2*1 + 0*t)*exp(2*t)", vec![]),
            ("ln(t)", "1*(1/t)", vec!["t > 0"]),
            ("tan(t)", "1*(1/cos(t)^2)", vec!["cos(t) != 0"]),
            ("arcsin(t)", "1*(1/sqrt(1 - t^2))", vec!["1 - t^2 > 0"]),
            ("-t", "-1", vec![]),
            ("t^(1/2)", "1/2*1*t^(1/2 - 1)", vec!["t > 0"]),
            ("t^-2", "-2*1*t^(-2 - 1)", vec!["t != 0"]),
        ];
        for (src, deriv, cs) in cases {
            let d = differentiate(&parse_expr(src).unwrap()).unwrap();
            assert_eq!(d.derivative.to_string(), deriv, "{src}");
            let got: Vec<String> = conds(&d).iter().map(|c| c.to_string()).collect();
            assert_eq!(got, cs, "{src}");
        }
    }

    #[test]
    fn symbolic_power_goes_through_exp_ln() {
        let d = differentiate(&parse_expr("t^sqrt(2)").unwrap()).unwrap();
        assert_eq!(
            conds(&d),
            vec![Condition::positive(t()), Condition::positive(Expr::int(2))]
        );
        assert_eq!(d.trace.rule_ids(), vec!["pow", "id", "sqrt", "const"]);
        assert!(d.derivative.to_string().contains("exp(sqrt(2)*ln(t))"));
    }

    #[test]
    fn state_vars_are_rejected() {
        assert_eq!(
            differentiate(&Expr::state("x")).unwrap_err(),
            DerivError::StateVariable("x".into())
        );
    }

    #[test]
    fn registry_extension() {
        let mut rules = RuleSet::standard();
        let cosh = Func::Custom("cosh".into());
        let body = Expr::func(cosh.clone(), t());
        assert_eq!(
            differentiate_with(&body, &rules).unwrap_err(),
            DerivError::NoRule("cosh".into())
        );
        rules.register_text("cosh", "cosh", "sinh(u)", &[]).unwrap();
        let d = differentiate_with(&body, &rules).unwrap();
        assert_eq!(d.derivative.to_string(), "1*sinh(t)");
        assert_eq!(d.trace.rule_ids(), vec!["cosh", "id"]);
    }

    #[test]
    fn duplicate_and_removed_rules() {
        let mut rules = RuleSet::standard();
        assert_eq!(
            rules
                .register("sin", Func::Custom("sin2".into()), Expr::zero(), vec![])
                .unwrap_err(),
            DerivError::DuplicateRule("sin".into())
        );
        assert!(rules.remove("sin").is_some());
        assert_eq!(
            differentiate_with(&Expr::func(Func::Sin, t()), &rules).unwrap_err(),
            DerivError::NoRule("sin".into())
        );
        assert!(rules.register("sin", Func::Sin, Expr::func(Func::Cos, arg_placeholder()), vec![]).is_ok());
    }

    #[test]
    fn replay_reproduces_derivative() {
        let rules = RuleSet::standard();
        for src in [
            "t^3/6 + x0*t + y0",
            "sqrt(t)*sin(t^2) - ln(1 + t)/exp(t)",
            "arcsin(t/2)^3 + tan(t)",
            "t^sqrt(2) + 2^t",
        ] {
            let body = parse_expr(src).unwrap();
            let d = differentiate_with(&body, &rules).unwrap();
            assert_eq!(replay(&body, &d.trace, &rules).unwrap(), d.derivative, "{src}");
        }
    }

    #[test]
    fn replay_rejects_foreign_trace() {
        let rules = RuleSet::standard();
        let a = parse_expr("t*t").unwrap();
        let b = parse_expr("t + t").unwrap();
        let trace = differentiate(&a).unwrap().trace;
        assert!(matches!(replay(&b, &trace, &rules), Err(DerivError::TraceMismatch(0))));
    }

    #[test]
    fn definedness_scan() {
        let e = parse_expr("1/(2*x0 - 1) + sqrt(t) + ln(t)").unwrap();
        let got: Vec<String> = definedness_conditions(&e).iter().map(|c| c.to_string()).collect();
        assert_eq!(got, vec!["2*x0 - 1 != 0", "t >= 0", "t > 0"]);
    }
}
