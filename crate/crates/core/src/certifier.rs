//! Certification of candidate closed-form solutions.
//!
//! A system is split into one equation per state variable. For each
//! component the expected derivative is the right-hand side with the
//! candidate substituted for the state variables; the computed derivative
//! comes from the rule engine. The two are compared in canonical form, the
//! side conditions collected along the way are discharged where possible,
//! and finally the solution's range is checked against the codomain.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::canon::{self, CanonError};
use crate::deriv::{self, Condition, DerivError, RuleSet, RuleTrace, Shape};
use crate::expr::{Expr, Symbol};
use crate::interval::{self, Env, Interval};
use crate::parser::{self, OdeSystem, ParseContext, ParseError, Relation};

/// One end of an interval; `None` is infinite.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Bound {
    pub value: Option<Expr>,
    pub closed: bool,
}

impl Bound {
    pub fn infinite() -> Self {
        Bound {
            value: None,
            closed: false,
        }
    }

    pub fn closed(e: Expr) -> Self {
        Bound {
            value: Some(e),
            closed: true,
        }
    }

    pub fn open(e: Expr) -> Self {
        Bound {
            value: Some(e),
            closed: false,
        }
    }
}

/// An interval of the real line with expression bounds.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Domain {
    pub lo: Bound,
    pub hi: Bound,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DomainError {
    #[error("expected `R` or an interval like `(a,b)`, `[a,b]`, got `{0}`")]
    Malformed(String),
    #[error("in interval bound: {0}")]
    Bound(#[from] ParseError),
    #[error("codomain entry `{0}` must look like `x:[a,b]`")]
    CodomainEntry(String),
    #[error("codomain names `{0}`, which is not a state variable")]
    UnknownVar(String),
}

impl Domain {
    pub fn whole() -> Self {
        Domain {
            lo: Bound::infinite(),
            hi: Bound::infinite(),
        }
    }

    pub fn open(lo: Expr, hi: Expr) -> Self {
        Domain {
            lo: Bound::open(lo),
            hi: Bound::open(hi),
        }
    }

    pub fn closed(lo: Expr, hi: Expr) -> Self {
        Domain {
            lo: Bound::closed(lo),
            hi: Bound::closed(hi),
        }
    }

    /// `(0, inf)`.
    pub fn positive() -> Self {
        Domain {
            lo: Bound::open(Expr::zero()),
            hi: Bound::infinite(),
        }
    }

    pub fn is_whole(&self) -> bool {
        self.lo.value.is_none() && self.hi.value.is_none()
    }

    /// Parses `R`, `(a,b)`, `[a,b]`, `(a,b]` or `[a,b)` where the bounds are
    /// expressions over parameters and initial values, or `inf`/`-inf`.
    pub fn parse(text: &str, ctx: &ParseContext) -> Result<Self, DomainError> {
        let s = text.trim();
        if matches!(s, "R" | "ℝ" | "(-inf,inf)" | "(-oo,oo)") {
            return Ok(Domain::whole());
        }
        let malformed = || DomainError::Malformed(text.to_string());
        let open_lo = match s.chars().next() {
            Some('(') => true,
            Some('[') => false,
            _ => return Err(malformed()),
        };
        let closed_hi = match s.chars().last() {
            Some(')') => false,
            Some(']') => true,
            _ => return Err(malformed()),
        };
        let inner = &s[1..s.len() - 1];
        let parts = parser::split_top_level(inner, ',');
        if parts.len() != 2 {
            return Err(malformed());
        }
        let bound = |piece: &str, closed: bool, sign: &str| -> Result<Bound, DomainError> {
            let p = piece.trim();
            let infinite = ["inf", "oo", "∞"]
                .iter()
                .any(|w| p == *w || p == format!("+{w}") || p == format!("-{w}"));
            if infinite {
                if (sign == "-") != p.starts_with('-') {
                    return Err(DomainError::Malformed(text.to_string()));
                }
                return Ok(Bound::infinite());
            }
            let e = parser::parse_expr_with(p, ctx)?;
            Ok(Bound {
                value: Some(e),
                closed,
            })
        };
        Ok(Domain {
            lo: bound(parts[0].1, !open_lo, "-")?,
            hi: bound(parts[1].1, closed_hi, "+")?,
        })
    }

    /// Enclosure of the set of points, with bound expressions enclosed
    /// under `env`.
    pub fn enclosure(&self, env: &Env) -> Interval {
        let (lo, lo_open) = match &self.lo.value {
            None => (f64::NEG_INFINITY, true),
            Some(e) => {
                let iv = interval::enclose(e, env);
                (iv.lo, !self.lo.closed || iv.lo_open)
            }
        };
        let (hi, hi_open) = match &self.hi.value {
            None => (f64::INFINITY, true),
            Some(e) => {
                let iv = interval::enclose(e, env);
                (iv.hi, !self.hi.closed || iv.hi_open)
            }
        };
        Interval::new(lo, hi, lo_open, hi_open)
    }

    /// Whether the rational `x` lies inside; bounds must be constants.
    pub fn contains(&self, x: &crate::expr::Rational) -> Option<bool> {
        let lo_ok = match &self.lo.value {
            None => true,
            Some(e) => {
                let b = canon::normalize(e).ok()?.as_rational()?;
                if self.lo.closed {
                    *x >= b
                } else {
                    *x > b
                }
            }
        };
        let hi_ok = match &self.hi.value {
            None => true,
            Some(e) => {
                let b = canon::normalize(e).ok()?.as_rational()?;
                if self.hi.closed {
                    *x <= b
                } else {
                    *x < b
                }
            }
        };
        Some(lo_ok && hi_ok)
    }
}

impl Default for Domain {
    fn default() -> Self {
        Domain::whole()
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_whole() {
            return write!(f, "R");
        }
        let lo = match &self.lo.value {
            None => "-inf".to_string(),
            Some(e) => e.to_string(),
        };
        let hi = match &self.hi.value {
            None => "inf".to_string(),
            Some(e) => e.to_string(),
        };
        write!(
            f,
            "{}{}, {}{}",
            if self.lo.closed { '[' } else { '(' },
            lo,
            hi,
            if self.hi.closed { ']' } else { ')' }
        )
    }
}

/// The codomain: all of `R^n`, or a box constraining some variables.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct Codomain {
    pub bounds: BTreeMap<String, Domain>,
}

impl Codomain {
    pub fn whole() -> Self {
        Codomain::default()
    }

    pub fn is_whole(&self) -> bool {
        self.bounds.values().all(Domain::is_whole)
    }

    /// Parses one `x:[a,b]` entry into the box.
    pub fn add_entry(&mut self, text: &str, sys: &OdeSystem) -> Result<(), DomainError> {
        let (var, iv) = text
            .split_once(':')
            .ok_or_else(|| DomainError::CodomainEntry(text.to_string()))?;
        let var = var.trim();
        if sys.rhs(var).is_none() {
            return Err(DomainError::UnknownVar(var.to_string()));
        }
        let dom = Domain::parse(iv, &sys.context())?;
        self.bounds.insert(var.to_string(), dom);
        Ok(())
    }
}

impl fmt::Display for Codomain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_whole() {
            return write!(f, "R^n");
        }
        let parts: Vec<String> = self
            .bounds
            .iter()
            .map(|(v, d)| format!("{v}:{d}"))
            .collect();
        write!(f, "{}", parts.join(" x "))
    }
}

/// A sign fact about parameters and initial values.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Assumption {
    pub condition: Condition,
    /// Source text, used as the assumption's name in certificates.
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AssumptionError {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("assumption `{0}` mentions `{1}`; only parameters and initial values are allowed")]
    Forbidden(String, String),
}

impl Assumption {
    pub fn new(condition: Condition, name: impl Into<String>) -> Self {
        Assumption {
            condition,
            name: name.into(),
        }
    }

    pub fn parse(text: &str, ctx: &ParseContext) -> Result<Self, AssumptionError> {
        let (expr, rel) = parser::parse_relation(text, ctx)?;
        for sym in expr.free_symbols() {
            if matches!(sym, Symbol::Time | Symbol::State(_)) {
                return Err(AssumptionError::Forbidden(text.to_string(), sym.name().to_string()));
            }
        }
        let shape = match rel {
            Relation::Positive => Shape::Positive,
            Relation::NonNegative => Shape::NonNegative,
            _ => Shape::NonZero,
        };
        Ok(Assumption::new(Condition::new(shape, expr), text.trim()))
    }
}

impl fmt::Display for Assumption {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name)
    }
}

/// A candidate solution with its claimed domain and codomain.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Solution {
    pub bindings: BTreeMap<String, Expr>,
    pub domain: Domain,
    pub codomain: Codomain,
}

impl Solution {
    pub fn new(bindings: impl IntoIterator<Item = (String, Expr)>) -> Self {
        Solution {
            bindings: bindings.into_iter().collect(),
            domain: Domain::whole(),
            codomain: Codomain::whole(),
        }
    }

    pub fn with_domain(mut self, domain: Domain) -> Self {
        self.domain = domain;
        self
    }

    pub fn with_codomain(mut self, codomain: Codomain) -> Self {
        self.codomain = codomain;
        self
    }

    /// Substitution map from state symbols to bindings.
    pub fn substitution(&self) -> BTreeMap<Symbol, Expr> {
        self.bindings
            .iter()
            .map(|(v, e)| (Symbol::State(v.clone()), e.clone()))
            .collect()
    }

    /// Parses `var=expr` entries against the system.
    pub fn parse_bindings<'a>(
        sys: &OdeSystem,
        entries: impl IntoIterator<Item = &'a str>,
    ) -> Result<Self, ParseError> {
        let ctx = sys.context();
        let mut bindings = BTreeMap::new();
        for entry in entries {
            let (var, rhs) = entry.split_once('=').ok_or_else(|| {
                ParseError::Syntax {
                    pos: 0,
                    expected: "`var=expr`".into(),
                    found: format!("`{entry}`"),
                }
            })?;
            let offset = var.len() + 1;
            let e = parser::parse_expr_with(rhs, &ctx).map_err(|err| match err {
                ParseError::Syntax {
                    pos,
                    expected,
                    found,
                } => ParseError::Syntax {
                    pos: pos + offset,
                    expected,
                    found,
                },
                other => other,
            })?;
            bindings.insert(var.trim().to_string(), e);
        }
        Ok(Solution::new(bindings))
    }
}

impl fmt::Display for Solution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .bindings
            .iter()
            .map(|(v, e)| format!("{v}(t) = {e}"))
            .collect();
        write!(f, "{}", parts.join(", "))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CertifyError {
    #[error("solution binds {found:?} but the system's state variables are {expected:?}")]
    ShapeMismatch {
        expected: Vec<String>,
        found: Vec<String>,
    },
    #[error("binding for `{0}` mentions state variable `{1}`")]
    StateInBinding(String, String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Certified,
    ConditionallyCertified,
    Failed,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Status::Certified => "certified",
            Status::ConditionallyCertified => "conditionally-certified",
            Status::Failed => "failed",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Verdict {
    Equal,
    NotEqualInNormalForm,
    /// Differentiation failed, e.g. for lack of a rule.
    NoDerivative(DerivError),
    /// The equality goal could not be normalised.
    Unnormalizable(CanonError),
}

impl Verdict {
    pub fn is_equal(&self) -> bool {
        matches!(self, Verdict::Equal)
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Verdict::Equal => write!(f, "equal"),
            Verdict::NotEqualInNormalForm => write!(f, "not equal in normal form"),
            Verdict::NoDerivative(e) => write!(f, "{e}"),
            Verdict::Unnormalizable(e) => write!(f, "{e}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ComponentRecord {
    pub var: String,
    pub binding: Expr,
    pub expected: Expr,
    pub computed: Option<Expr>,
    pub verdict: Verdict,
    pub trace: RuleTrace,
    /// Operators in the equality goal `computed = expected`.
    pub goal_ops: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Disposition {
    DischargedArithmetic,
    DischargedByAssumption(String),
    DischargedByDomain,
    Unresolved,
}

impl Disposition {
    pub fn is_discharged(&self) -> bool {
        !matches!(self, Disposition::Unresolved)
    }
}

impl fmt::Display for Disposition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Disposition::DischargedArithmetic => write!(f, "arithmetic"),
            Disposition::DischargedByAssumption(a) => write!(f, "by assumption `{a}`"),
            Disposition::DischargedByDomain => write!(f, "by domain"),
            Disposition::Unresolved => write!(f, "unresolved"),
        }
    }
}

/// Where a condition came from.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum ConditionSource {
    /// Emitted by a derivative rule at the given trace step.
    Rule {
        var: String,
        rule: String,
        step: usize,
    },
    /// Needed for the binding itself to be defined.
    Definedness { var: String },
}

impl fmt::Display for ConditionSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConditionSource::Rule { var, rule, step } => {
                write!(f, "{var}: rule {rule} (step {step})")
            }
            ConditionSource::Definedness { var } => write!(f, "{var}: definedness"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConditionRecord {
    pub condition: Condition,
    pub source: ConditionSource,
    pub disposition: Disposition,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RangeVerdict {
    Holds,
    Unresolved(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Certificate {
    pub name: Option<String>,
    pub status: Status,
    pub components: Vec<ComponentRecord>,
    pub conditions: Vec<ConditionRecord>,
    pub range: RangeVerdict,
    pub domain: Domain,
    pub assumptions: Vec<Assumption>,
}

impl Certificate {
    pub fn unresolved(&self) -> impl Iterator<Item = &ConditionRecord> {
        self.conditions
            .iter()
            .filter(|c| !c.disposition.is_discharged())
    }

    pub fn failed_components(&self) -> impl Iterator<Item = &ComponentRecord> {
        self.components.iter().filter(|c| !c.verdict.is_equal())
    }

    /// Largest equality goal among the components.
    pub fn max_goal_ops(&self) -> usize {
        self.components.iter().map(|c| c.goal_ops).max().unwrap_or(0)
    }
}

impl fmt::Display for Certificate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(name) = &self.name {
            writeln!(f, "{name}: {}", self.status)?;
        } else {
            writeln!(f, "{}", self.status)?;
        }
        writeln!(f, "domain: {}", self.domain)?;
        for c in &self.components {
            writeln!(f, "component {}: {}", c.var, c.verdict)?;
            writeln!(f, "  expected: {}", c.expected)?;
            if let Some(computed) = &c.computed {
                writeln!(f, "  computed: {computed}")?;
            }
            writeln!(f, "  rules: {}", c.trace)?;
            writeln!(f, "  goal operators: {}", c.goal_ops)?;
        }
        for c in &self.conditions {
            writeln!(f, "condition {} [{}]: {}", c.condition, c.source, c.disposition)?;
        }
        match &self.range {
            RangeVerdict::Holds => writeln!(f, "range: holds")?,
            RangeVerdict::Unresolved(why) => writeln!(f, "range: unresolved ({why})")?,
        }
        if !self.assumptions.is_empty() {
            let names: Vec<&str> = self.assumptions.iter().map(|a| a.name.as_str()).collect();
            writeln!(f, "assumptions: {}", names.join(", "))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default)]
pub struct Certifier {
    pub rules: RuleSet,
    pub name: Option<String>,
}

impl Certifier {
    pub fn new() -> Self {
        Certifier::default()
    }

    pub fn with_rules(rules: RuleSet) -> Self {
        Certifier { rules, name: None }
    }

    pub fn named(mut self, name: impl Into<String>) -> Self {
        self.name = Some(name.into());
        self
    }

    pub fn certify(
        &self,
        sys: &OdeSystem,
        sol: &Solution,
        assumptions: &[Assumption],
    ) -> Result<Certificate, CertifyError> {
        check_shape(sys, sol)?;
        let subst = sol.substitution();
        let mut components = Vec::with_capacity(sys.dim());
        let mut raw_conditions: Vec<(Condition, ConditionSource)> = Vec::new();

        for (var, rhs) in sys.equations() {
            let binding = sol.bindings[var].clone();
            let expected = rhs.substitute(&subst);
            for c in deriv::definedness_conditions(&binding) {
                raw_conditions.push((c, ConditionSource::Definedness { var: var.clone() }));
            }
            let record = match deriv::differentiate_with(&binding, &self.rules) {
                Ok(d) => {
                    for sc in d.conditions {
                        raw_conditions.push((
                            sc.condition,
                            ConditionSource::Rule {
                                var: var.clone(),
                                rule: sc.origin.rule,
                                step: sc.origin.step,
                            },
                        ));
                    }
                    let verdict = match canon::equal(&d.derivative, &expected) {
                        Ok(true) => Verdict::Equal,
                        Ok(false) => Verdict::NotEqualInNormalForm,
                        Err(e) => Verdict::Unnormalizable(e),
                    };
                    ComponentRecord {
                        var: var.clone(),
                        goal_ops: canon::op_count_of_goal(&d.derivative, &expected),
                        binding,
                        computed: Some(d.derivative),
                        expected,
                        verdict,
                        trace: d.trace,
                    }
                }
                Err(e) => ComponentRecord {
                    var: var.clone(),
                    goal_ops: expected.count_operators(),
                    binding,
                    expected,
                    computed: None,
                    verdict: Verdict::NoDerivative(e),
                    trace: RuleTrace::default(),
                },
            };
            components.push(record);
        }

        let env = assumption_env(&sol.domain, assumptions);
        let mut seen = BTreeSet::new();
        let mut conditions = Vec::new();
        for (condition, source) in raw_conditions {
            let key = (condition.shape, condition.expr.to_string());
            if !seen.insert(key) {
                continue;
            }
            let disposition = discharge_in(&condition, &env, assumptions);
            conditions.push(ConditionRecord {
                condition,
                source,
                disposition,
            });
        }

        let range = check_range_in(sol, &env);
        let all_equal = components.iter().all(|c| c.verdict.is_equal());
        let all_discharged = conditions.iter().all(|c| c.disposition.is_discharged());
        let status = if !all_equal {
            Status::Failed
        } else if all_discharged && range == RangeVerdict::Holds {
            Status::Certified
        } else {
            Status::ConditionallyCertified
        };
        Ok(Certificate {
            name: self.name.clone(),
            status,
            components,
            conditions,
            range,
            domain: sol.domain.clone(),
            assumptions: assumptions.to_vec(),
        })
    }
}

/// Certifies with the standard rule set.
pub fn certify(
    sys: &OdeSystem,
    sol: &Solution,
    assumptions: &[Assumption],
) -> Result<Certificate, CertifyError> {
    Certifier::new().certify(sys, sol, assumptions)
}

fn check_shape(sys: &OdeSystem, sol: &Solution) -> Result<(), CertifyError> {
    let expected: Vec<String> = {
        let mut v: Vec<String> = sys.state_vars().map(String::from).collect();
        v.sort();
        v
    };
    let found: Vec<String> = sol.bindings.keys().cloned().collect();
    if expected != found {
        return Err(CertifyError::ShapeMismatch { expected, found });
    }
    for (var, e) in &sol.bindings {
        if let Some(Symbol::State(s)) = e
            .free_symbols()
            .into_iter()
            .find(|s| matches!(s, Symbol::State(_)))
        {
            return Err(CertifyError::StateInBinding(var.clone(), s));
        }
    }
    Ok(())
}

/// One component as its own 1-dimensional problem: the other state
/// variables in its right-hand side are replaced by their bindings.
pub fn project(sys: &OdeSystem, sol: &Solution, var: &str) -> Option<(OdeSystem, Solution)> {
    let rhs = sys.rhs(var)?;
    let binding = sol.bindings.get(var)?.clone();
    let mut others = sol.substitution();
    others.remove(&Symbol::State(var.to_string()));
    let sys1 = OdeSystem::new(vec![(var.to_string(), rhs.substitute(&others))]).ok()?;
    let mut sol1 = Solution::new([(var.to_string(), binding)]).with_domain(sol.domain.clone());
    if let Some(d) = sol.codomain.bounds.get(var) {
        sol1.codomain.bounds.insert(var.to_string(), d.clone());
    }
    Some((sys1, sol1))
}

/// Intervals for `t` (from the domain) and for symbols that assumptions
/// bound directly.
pub fn assumption_env(domain: &Domain, assumptions: &[Assumption]) -> Env {
    let mut env = Env::new();
    for a in assumptions {
        if let Some(sym) = a.condition.expr.as_symbol() {
            let iv = match a.condition.shape {
                Shape::Positive => Interval::positive(),
                Shape::NonNegative => Interval::nonnegative(),
                Shape::NonZero => continue,
            };
            env.insert(sym, iv);
        }
        if let Expr::Neg(inner) = &a.condition.expr {
            if let Some(sym) = inner.as_symbol() {
                let iv = match a.condition.shape {
                    Shape::Positive => Interval::positive().neg(),
                    Shape::NonNegative => Interval::nonnegative().neg(),
                    Shape::NonZero => continue,
                };
                env.insert(sym, iv);
            }
        }
    }
    let t = domain.enclosure(&env);
    env.insert(Symbol::Time, t);
    env
}

pub fn discharge(c: &Condition, domain: &Domain, assumptions: &[Assumption]) -> Disposition {
    discharge_in(c, &assumption_env(domain, assumptions), assumptions)
}

fn holds(shape: Shape, iv: &Interval) -> bool {
    match shape {
        Shape::NonZero => iv.is_nonzero(),
        Shape::Positive => iv.is_positive(),
        Shape::NonNegative => iv.is_nonnegative(),
    }
}

fn discharge_in(c: &Condition, env: &Env, assumptions: &[Assumption]) -> Disposition {
    use num_traits::{Signed, Zero};
    let normal = canon::normalize(&c.expr).ok();
    if let Some(q) = normal.as_ref().and_then(|n| n.as_rational()) {
        let ok = match c.shape {
            Shape::NonZero => !q.is_zero(),
            Shape::Positive => q.is_positive(),
            Shape::NonNegative => !q.is_negative(),
        };
        if ok {
            return Disposition::DischargedArithmetic;
        }
        return Disposition::Unresolved;
    }
    for a in assumptions {
        let ac = &a.condition;
        let same = canon::equal(&c.expr, &ac.expr).unwrap_or(false);
        if same && ac.shape.implies(c.shape) {
            return Disposition::DischargedByAssumption(a.name.clone());
        }
        if c.shape == Shape::NonZero && ac.shape != Shape::NonNegative {
            let negated = canon::equal(&c.expr, &Expr::neg(ac.expr.clone())).unwrap_or(false);
            if negated {
                return Disposition::DischargedByAssumption(a.name.clone());
            }
        }
    }
    if holds(c.shape, &interval::enclose(&c.expr, env)) {
        return Disposition::DischargedByDomain;
    }
    if let Some(n) = normal {
        let simplified = n.to_expr();
        if simplified != c.expr && holds(c.shape, &interval::enclose(&simplified, env)) {
            return Disposition::DischargedByDomain;
        }
    }
    Disposition::Unresolved
}

pub fn check_range(sol: &Solution, assumptions: &[Assumption]) -> RangeVerdict {
    check_range_in(sol, &assumption_env(&sol.domain, assumptions))
}

fn check_range_in(sol: &Solution, env: &Env) -> RangeVerdict {
    for (var, dom) in &sol.codomain.bounds {
        if dom.is_whole() {
            continue;
        }
        let Some(binding) = sol.bindings.get(var) else {
            return RangeVerdict::Unresolved(format!("no binding for `{var}`"));
        };
        let image = interval::enclose(binding, env);
        let target = codomain_interval(dom, env);
        if !image.is_subset_of(&target) {
            return RangeVerdict::Unresolved(format!("image of {var} {image} not inside {dom}"));
        }
    }
    RangeVerdict::Holds
}

/// Inner approximation of a codomain interval: the image must fit inside
/// for every admissible value of the bound expressions.
fn codomain_interval(dom: &Domain, env: &Env) -> Interval {
    let (lo, lo_open) = match &dom.lo.value {
        None => (f64::NEG_INFINITY, true),
        Some(e) => {
            let iv = interval::enclose(e, env);
            (iv.hi, !dom.lo.closed || iv.lo != iv.hi)
        }
    };
    let (hi, hi_open) = match &dom.hi.value {
        None => (f64::INFINITY, true),
        Some(e) => {
            let iv = interval::enclose(e, env);
            (iv.lo, !dom.hi.closed || iv.lo != iv.hi)
        }
    };
    Interval::new(lo, hi, lo_open, hi_open)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::{parse_expr, parse_system};

    fn example1() -> (OdeSystem, Solution) {
        let sys = parse_system("x' = t, y' = x, z' = 1").unwrap();
        let sol = Solution::parse_bindings(&sys, ["x=t^2/2 + x0", "y=t^3/6 + x0*t + y0", "z=z0 + t"]).unwrap();
        (sys, sol)
    }

    #[test]
    fn example1_is_certified() {
        let (sys, sol) = example1();
        let cert = certify(&sys, &sol, &[]).unwrap();
        assert_eq!(cert.status, Status::Certified, "{cert}");
        let y = &cert.components[1];
        assert_eq!(
            y.computed.as_ref().unwrap().to_string(),
            "-t^3*(1/6*0*(1/6)) + 3*1*t^(3 - 1)/6 + (x0*1 + 0*t) + 0"
        );
        let nonzero: Vec<String> = cert
            .conditions
            .iter()
            .map(|c| format!("{} {}", c.condition, c.disposition))
            .collect();
        assert!(nonzero.contains(&"2 != 0 arithmetic".to_string()), "{nonzero:?}");
        assert!(nonzero.contains(&"6 != 0 arithmetic".to_string()), "{nonzero:?}");
    }

    #[test]
    fn mutated_binding_fails() {
        let (sys, mut sol) = example1();
        sol.bindings.insert("z".into(), parse_expr("z0 + 2*t").unwrap());
        let cert = certify(&sys, &sol, &[]).unwrap();
        assert_eq!(cert.status, Status::Failed);
        let z = &cert.components[2];
        assert_eq!(z.verdict, Verdict::NotEqualInNormalForm);
        assert_eq!(canon::simplify(z.computed.as_ref().unwrap()).unwrap(), Expr::int(2));
        assert_eq!(z.expected, Expr::one());
    }

    #[test]
    fn gravity() {
        let sys = parse_system("h' = v, v' = -g").unwrap();
        let sol = Solution::parse_bindings(&sys, ["h=h0 + v0*t - g*t^2/2", "v=v0 - g*t"]).unwrap();
        assert_eq!(certify(&sys, &sol, &[]).unwrap().status, Status::Certified);
    }

    #[test]
    fn assumption_discharges() {
        let sys = parse_system("x' = c + b*(u - x)").unwrap();
        let ctx = sys.context();
        let b_pos = Assumption::parse("b > 0", &ctx).unwrap();
        let c = Condition::positive(Expr::param("b"));
        assert_eq!(
            discharge(&c, &Domain::whole(), &[b_pos]),
            Disposition::DischargedByAssumption("b > 0".into())
        );
        assert_eq!(discharge(&c, &Domain::whole(), &[]), Disposition::Unresolved);
    }

    #[test]
    fn discharge_examples() {
        assert_eq!(
            discharge(&Condition::nonzero(Expr::int(6)), &Domain::whole(), &[]),
            Disposition::DischargedArithmetic
        );
        assert_eq!(
            discharge(&Condition::positive(Expr::Time), &Domain::positive(), &[]),
            Disposition::DischargedByDomain
        );
        assert_eq!(
            discharge(&Condition::positive(Expr::Time), &Domain::whole(), &[]),
            Disposition::Unresolved
        );
    }

    #[test]
    fn range_examples() {
        let sys = parse_system("x' = 1").unwrap();
        let ctx = sys.context();
        let sol = Solution::new([("x".to_string(), Expr::Time)])
            .with_domain(Domain::parse("[0,1]", &ctx).unwrap());
        assert_eq!(check_range(&sol, &[]), RangeVerdict::Holds);
        let mut cod = Codomain::whole();
        cod.add_entry("x:[0,2]", &sys).unwrap();
        let sol = sol.with_codomain(cod);
        assert_eq!(check_range(&sol, &[]), RangeVerdict::Holds);

        let mut cod = Codomain::whole();
        cod.add_entry("x:[0,1]", &sys).unwrap();
        let sol = Solution::new([("x".to_string(), parse_expr("1/t").unwrap())])
            .with_domain(Domain::parse("(0,1)", &ctx).unwrap())
            .with_codomain(cod);
        assert!(matches!(check_range(&sol, &[]), RangeVerdict::Unresolved(_)));
    }

    #[test]
    fn riccati_solution_is_conditional() {
        let sys = parse_system("x' = x^2").unwrap();
        let sol = Solution::parse_bindings(&sys, ["x=x0/(1 - x0*t)"]).unwrap();
        let cert = certify(&sys, &sol, &[]).unwrap();
        assert_eq!(cert.status, Status::ConditionallyCertified, "{cert}");
        let unresolved: Vec<String> = cert.unresolved().map(|c| c.condition.to_string()).collect();
        assert_eq!(unresolved, vec!["1 - x0*t != 0"]);
    }

    #[test]
    fn shape_errors() {
        let (sys, mut sol) = example1();
        sol.bindings.remove("z");
        assert!(matches!(certify(&sys, &sol, &[]), Err(CertifyError::ShapeMismatch { .. })));
    }

    #[test]
    fn domain_parsing() {
        let ctx = ParseContext::standalone();
        assert!(Domain::parse("R", &ctx).unwrap().is_whole());
        let d = Domain::parse("(0, inf)", &ctx).unwrap();
        assert_eq!(d, Domain::positive());
        assert_eq!(d.to_string(), "(0, inf)");
        assert!(Domain::parse("[0,1)", &ctx).is_ok());
        assert!(Domain::parse("0,1", &ctx).is_err());
        assert!(Domain::parse("(inf, 0)", &ctx).is_err());
    }

    #[test]
    fn projections_certify_independently() {
        let (sys, sol) = example1();
        for var in ["x", "y", "z"] {
            let (s1, sol1) = project(&sys, &sol, var).unwrap();
            assert_eq!(certify(&s1, &sol1, &[]).unwrap().status, Status::Certified);
        }
    }
}
