//! Randomised numeric search for counterexamples to claimed equalities and
//! candidate solutions.
//!
//! Values are computed with [`crate::eval`] at high precision. A sample
//! point is used only when every constraint holds with margin
//! [`MARGIN`]; a gap counts when its relative size exceeds [`THRESHOLD`].

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use num_bigint::BigInt;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::certifier::{Assumption, Domain, Solution};
use crate::deriv::{self, Condition, Shape};
use crate::eval::{self, EvalError, Value};
use crate::expr::{rat, Expr, Rational, Symbol, Valuation};
use crate::parser::OdeSystem;

pub const THRESHOLD: f64 = 1e-6;
pub const MARGIN: f64 = 1e-3;
pub const DEFAULT_SEED: u64 = 0x0DE_CE27;
/// Sample magnitudes lie in `[10^-LOG_SPAN_LO, 10^LOG_SPAN_HI]`.
const LOG_SPAN_LO: f64 = -2.0;
const LOG_SPAN_HI: f64 = 1.0;
const CHUNK: usize = 64;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RefuteError {
    #[error("at least one trial is required")]
    NoTrials,
    #[error("no admissible sample point in {0} attempts")]
    Unsatisfiable(usize),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

#[derive(Debug, Clone)]
pub struct Counterexample {
    pub valuation: Valuation,
    pub lhs: Value,
    pub rhs: Value,
    pub abs_gap: f64,
    pub rel_gap: f64,
    /// Attempt index that produced it.
    pub attempt: usize,
}

impl fmt::Display for Counterexample {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let point: Vec<String> = self
            .valuation
            .iter()
            .map(|(s, q)| format!("{}={}", s.name(), show_rational(q)))
            .collect();
        write!(
            f,
            "at {}: {} vs {} (relative gap {:.3e})",
            point.join(", "),
            self.lhs,
            self.rhs,
            self.rel_gap
        )
    }
}

fn show_rational(q: &Rational) -> String {
    if q.is_integer() {
        q.numer().to_string()
    } else {
        match eval::rational_to_f64(q) {
            Some(x) if q.denom().bits() > 16 => format!("{x}"),
            _ => format!("{}/{}", q.numer(), q.denom()),
        }
    }
}

#[derive(Debug, Clone)]
pub enum Refutation {
    Counterexample(Box<Counterexample>),
    NoneFound { trials: usize },
}

impl Refutation {
    pub fn counterexample(&self) -> Option<&Counterexample> {
        match self {
            Refutation::Counterexample(c) => Some(c),
            Refutation::NoneFound { .. } => None,
        }
    }

    pub fn is_refuted(&self) -> bool {
        self.counterexample().is_some()
    }
}

impl fmt::Display for Refutation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Refutation::Counterexample(c) => write!(f, "counterexample {c}"),
            Refutation::NoneFound { trials } => write!(f, "no counterexample in {trials} trials"),
        }
    }
}

/// Outcome for one component of a candidate solution.
#[derive(Debug, Clone)]
pub struct ComponentRefutation {
    pub var: String,
    /// `Err` when the binding could not be differentiated.
    pub result: Result<Refutation, String>,
}

#[derive(Debug, Clone)]
pub struct Refuter {
    pub seed: u64,
    pub trials: usize,
}

impl Default for Refuter {
    fn default() -> Self {
        Refuter {
            seed: DEFAULT_SEED,
            trials: 500,
        }
    }
}

/// Points tried before random sampling starts.
fn nice(k: usize) -> Rational {
    const NICE: [(i64, i64); 10] = [
        (2, 1),
        (3, 1),
        (1, 2),
        (-1, 1),
        (5, 2),
        (-3, 2),
        (1, 3),
        (7, 1),
        (-2, 3),
        (3, 4),
    ];
    let (n, d) = NICE[k % NICE.len()];
    rat(n, d)
}

const NICE_ROUNDS: usize = 10;

fn to_rational(x: f64) -> Rational {
    // Round to a 1e-6 grid to keep exact arithmetic cheap.
    let scaled = (x * 1e6).round();
    Rational::new(BigInt::from(scaled as i64), BigInt::from(1_000_000))
}

fn log_uniform(rng: &mut ChaCha8Rng) -> f64 {
    10f64.powf(rng.gen_range(LOG_SPAN_LO..LOG_SPAN_HI))
}

struct Sampler<'a> {
    symbols: Vec<Symbol>,
    domain: &'a Domain,
    constraints: Vec<Condition>,
    seed: u64,
}

enum Attempt {
    Rejected,
    Agree,
    Gap(Box<Counterexample>),
}

impl Sampler<'_> {
    fn point(&self, attempt: usize) -> Option<Valuation> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(attempt as u64);
        let mut v = Valuation::new();
        for (i, s) in self.symbols.iter().enumerate() {
            if *s == Symbol::Time {
                continue;
            }
            let q = if attempt < NICE_ROUNDS {
                nice(attempt + i)
            } else {
                let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
                to_rational(sign * log_uniform(&mut rng))
            };
            v.insert(s.clone(), q);
        }
        if self.symbols.contains(&Symbol::Time) {
            let t = self.time(attempt, &v, &mut rng)?;
            v.insert(Symbol::Time, t);
        }
        Some(v)
    }

    fn time(&self, attempt: usize, v: &Valuation, rng: &mut ChaCha8Rng) -> Option<Rational> {
        let bound = |b: &Option<Expr>| -> Option<Option<f64>> {
            match b {
                None => Some(None),
                Some(e) => eval::eval_f64(e, v).ok().flatten().map(Some),
            }
        };
        let lo = bound(&self.domain.lo.value)?;
        let hi = bound(&self.domain.hi.value)?;
        let candidate = if attempt < NICE_ROUNDS {
            Some(nice(attempt))
        } else {
            None
        };
        let inside = |q: &Rational| {
            let x = eval::rational_to_f64(q).unwrap_or(f64::NAN);
            lo.is_none_or(|l| x >= l + MARGIN) && hi.is_none_or(|h| x <= h - MARGIN)
        };
        if let Some(q) = candidate.filter(inside) {
            return Some(q);
        }
        let x = match (lo, hi) {
            (None, None) => {
                let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
                sign * log_uniform(rng)
            }
            (Some(l), None) => l + log_uniform(rng),
            (None, Some(h)) => h - log_uniform(rng),
            (Some(l), Some(h)) => {
                if h - l <= 2.0 * MARGIN {
                    return None;
                }
                rng.gen_range(l + MARGIN..h - MARGIN)
            }
        };
        Some(to_rational(x))
    }

    fn admissible(&self, v: &Valuation) -> bool {
        self.constraints.iter().all(|c| {
            match eval::eval_f64(&c.expr, v).ok().flatten() {
                Some(x) => match c.shape {
                    Shape::NonZero => x.abs() >= MARGIN,
                    Shape::Positive | Shape::NonNegative => x >= MARGIN,
                },
                None => false,
            }
        })
    }

    fn attempt(&self, a: &Expr, b: &Expr, k: usize) -> Attempt {
        let Some(v) = self.point(k) else {
            return Attempt::Rejected;
        };
        if !self.admissible(&v) {
            return Attempt::Rejected;
        }
        let (Ok(lhs), Ok(rhs)) = (eval::eval(a, &v), eval::eval(b, &v)) else {
            return Attempt::Rejected;
        };
        let Some((abs_gap, rel_gap)) = lhs.gap(&rhs) else {
            return Attempt::Rejected;
        };
        if rel_gap > THRESHOLD {
            Attempt::Gap(Box::new(Counterexample {
                valuation: v,
                lhs,
                rhs,
                abs_gap,
                rel_gap,
                attempt: k,
            }))
        } else {
            Attempt::Agree
        }
    }

    fn run(&self, a: &Expr, b: &Expr, trials: usize) -> Result<Refutation, RefuteError> {
        if trials == 0 {
            return Err(RefuteError::NoTrials);
        }
        let budget = trials.saturating_mul(10);
        let mut accepted = 0;
        let mut start = 0;
        while start < budget && accepted < trials {
            let end = (start + CHUNK).min(budget);
            let results: Vec<Attempt> = (start..end)
                .into_par_iter()
                .map(|k| self.attempt(a, b, k))
                .collect();
            for r in results {
                match r {
                    Attempt::Rejected => {}
                    Attempt::Agree => {
                        accepted += 1;
                        if accepted == trials {
                            break;
                        }
                    }
                    Attempt::Gap(c) => return Ok(Refutation::Counterexample(c)),
                }
            }
            start = end;
        }
        if accepted == 0 {
            return Err(RefuteError::Unsatisfiable(budget));
        }
        Ok(Refutation::NoneFound { trials: accepted })
    }
}

fn symbols_of<'a>(exprs: impl IntoIterator<Item = &'a Expr>) -> Vec<Symbol> {
    let mut set = BTreeSet::new();
    for e in exprs {
        set.extend(e.free_symbols());
    }
    set.into_iter().collect()
}

impl Refuter {
    pub fn new(seed: u64, trials: usize) -> Self {
        Refuter { seed, trials }
    }

    /// Searches for a point where `a` and `b` differ. Definedness conditions
    /// of both sides are added to `constraints`.
    pub fn refute_equality(
        &self,
        a: &Expr,
        b: &Expr,
        constraints: &[Condition],
    ) -> Result<Refutation, RefuteError> {
        self.refute_on(a, b, constraints, &Domain::whole())
    }

    fn refute_on(
        &self,
        a: &Expr,
        b: &Expr,
        constraints: &[Condition],
        domain: &Domain,
    ) -> Result<Refutation, RefuteError> {
        let mut all: Vec<Condition> = constraints.to_vec();
        all.extend(deriv::definedness_conditions(a));
        all.extend(deriv::definedness_conditions(b));
        let symbols = symbols_of(
            [a, b]
                .into_iter()
                .chain(all.iter().map(|c| &c.expr)),
        );
        let sampler = Sampler {
            symbols,
            domain,
            constraints: all,
            seed: self.seed,
        };
        sampler.run(a, b, self.trials)
    }

    /// Compares each binding's derivative with the right-hand side under the
    /// solution, sampling `t` from the solution's domain.
    pub fn refute_solution(
        &self,
        sys: &OdeSystem,
        sol: &Solution,
        assumptions: &[Assumption],
    ) -> Result<Vec<ComponentRefutation>, RefuteError> {
        let subst = sol.substitution();
        let mut out = Vec::new();
        for (i, (var, rhs)) in sys.equations().iter().enumerate() {
            let Some(binding) = sol.bindings.get(var) else {
                out.push(ComponentRefutation {
                    var: var.clone(),
                    result: Err(format!("no binding for `{var}`")),
                });
                continue;
            };
            let expected = rhs.substitute(&subst);
            let d = match deriv::differentiate(binding) {
                Ok(d) => d,
                Err(e) => {
                    out.push(ComponentRefutation {
                        var: var.clone(),
                        result: Err(e.to_string()),
                    });
                    continue;
                }
            };
            let mut constraints: Vec<Condition> =
                assumptions.iter().map(|a| a.condition.clone()).collect();
            constraints.extend(d.conditions.into_iter().map(|sc| sc.condition));
            constraints.extend(deriv::definedness_conditions(binding));
            let component = Refuter::new(self.seed.wrapping_add(i as u64), self.trials);
            let result =
                component.refute_on(&d.derivative, &expected, &constraints, &sol.domain)?;
            out.push(ComponentRefutation {
                var: var.clone(),
                result: Ok(result),
            });
        }
        Ok(out)
    }
}

pub fn refute_equality(
    a: &Expr,
    b: &Expr,
    constraints: &[Condition],
    trials: usize,
) -> Result<Refutation, RefuteError> {
    Refuter::new(DEFAULT_SEED, trials).refute_equality(a, b, constraints)
}

pub fn refute_solution(
    sys: &OdeSystem,
    sol: &Solution,
    assumptions: &[Assumption],
    trials: usize,
) -> Result<Vec<ComponentRefutation>, RefuteError> {
    Refuter::new(DEFAULT_SEED, trials).refute_solution(sys, sol, assumptions)
}

/// Single-node mutations: a coefficient (a literal operand of `*` or `/`)
/// moved by ±1, or `+` and `*` swapped.
pub fn mutations(e: &Expr) -> Vec<Expr> {
    let mut out = Vec::new();
    mutate_into(e, false, &mut |m| out.push(m));
    out
}

fn mutate_into(e: &Expr, coefficient: bool, emit: &mut dyn FnMut(Expr)) {
    match e {
        Expr::Const(q) if coefficient => {
            emit(Expr::Const(q + Rational::from_integer(1.into())));
            emit(Expr::Const(q - Rational::from_integer(1.into())));
        }
        Expr::Add(a, b) => emit(Expr::mul((**a).clone(), (**b).clone())),
        Expr::Mul(a, b) => emit(Expr::add((**a).clone(), (**b).clone())),
        _ => {}
    }
    let factor = matches!(e, Expr::Mul(..) | Expr::Div(..));
    let children: Vec<Expr> = e.children().into_iter().cloned().collect();
    for (i, child) in children.iter().enumerate() {
        mutate_into(child, factor, &mut |m| {
            let mut replaced = children.clone();
            replaced[i] = m;
            emit(rebuild(e, replaced));
        });
    }
}

fn rebuild(e: &Expr, mut kids: Vec<Expr>) -> Expr {
    let mut next = || kids.remove(0);
    match e {
        Expr::Neg(_) => Expr::neg(next()),
        Expr::Add(..) => {
            let a = next();
            Expr::add(a, next())
        }
        Expr::Mul(..) => {
            let a = next();
            Expr::mul(a, next())
        }
        Expr::Div(..) => {
            let a = next();
            Expr::div(a, next())
        }
        Expr::Pow(..) => {
            let a = next();
            Expr::pow(a, next())
        }
        Expr::Func(f, _) => Expr::func(f.clone(), next()),
        Expr::Tuple(_) => Expr::Tuple(kids),
        leaf => leaf.clone(),
    }
}

/// Valuation rendered with symbol names, for reports.
pub fn valuation_map(v: &Valuation) -> BTreeMap<String, String> {
    v.iter()
        .map(|(s, q)| (s.name().to_string(), show_rational(q)))
        .collect()
}
