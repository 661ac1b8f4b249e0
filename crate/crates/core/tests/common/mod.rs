//! Generators and numeric helpers shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeMap;

use num_traits::Signed;
use odecert::deriv::{definedness_conditions, differentiate, Condition, Shape};
use odecert::eval::{eval, Value};
use odecert::expr::{rat, Expr, Func, Rational, Symbol, Valuation};
use proptest::prelude::*;
use proptest::strategy::ValueTree;
use proptest::test_runner::{Config, RngAlgorithm, TestRng, TestRunner};

pub const MARGIN: f64 = 1e-3;

fn small_const() -> impl Strategy<Value = Expr> {
    prop_oneof![
        (-5i64..=5).prop_map(Expr::int),
        (1i64..=5, 2i64..=4).prop_map(|(n, d)| Expr::rational(rat(n, d))),
    ]
}

/// Closed-form bodies in `t`, `x0` and the parameter `a`.
pub fn body(depth: u32) -> BoxedStrategy<Expr> {
    let leaf = prop_oneof![
        3 => Just(Expr::Time),
        2 => small_const(),
        1 => Just(Expr::init("x0")),
        1 => Just(Expr::param("a")),
    ];
    leaf.prop_recursive(depth, 24, 2, |inner| {
        prop_oneof![
            3 => (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::add(a, b)),
            2 => (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::sub(a, b)),
            3 => (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::mul(a, b)),
            2 => (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::div(a, b)),
            1 => inner.clone().prop_map(Expr::neg),
            2 => (inner.clone(), 2i64..=3).prop_map(|(a, n)| Expr::pow(a, Expr::int(n))),
            1 => inner.clone().prop_map(|a| Expr::pow(a, Expr::rational(rat(1, 2)))),
            1 => inner.clone().prop_map(|a| Expr::pow(a, Expr::int(-1))),
            2 => (
                prop::sample::select(Func::BUILTIN.to_vec()),
                inner.clone()
            )
                .prop_map(|(f, a)| Expr::func(f, a)),
        ]
    })
    .boxed()
}

/// Bodies that always depend on `t`.
pub fn time_body(depth: u32) -> BoxedStrategy<Expr> {
    body(depth)
        .prop_map(|e| {
            if e.depends_on_time() {
                e
            } else {
                Expr::add(e, Expr::Time)
            }
        })
        .boxed()
}

/// A point with `t`, `x0` and `a` bound to moderate rationals.
pub fn point() -> impl Strategy<Value = Valuation> {
    let coord = (-300i64..=300, prop::sample::select(vec![7i64, 10, 16, 100]))
        .prop_map(|(n, d)| rat(n, d));
    (coord.clone(), coord.clone(), coord).prop_map(|(t, x0, a)| valuation(t, x0, a))
}

pub fn valuation(t: Rational, x0: Rational, a: Rational) -> Valuation {
    let mut v = Valuation::new();
    v.insert(Symbol::Time, t);
    v.insert(Symbol::Init("x0".into()), x0);
    v.insert(Symbol::Param("a".into()), a);
    v
}

/// Deterministic draws from a strategy, for tests that are not proptests.
pub struct Sampler {
    runner: TestRunner,
}

impl Sampler {
    pub fn new(seed: u64) -> Self {
        let mut bytes = [0u8; 32];
        bytes[..8].copy_from_slice(&seed.to_le_bytes());
        let rng = TestRng::from_seed(RngAlgorithm::ChaCha, &bytes);
        Sampler {
            runner: TestRunner::new_with_rng(Config::default(), rng),
        }
    }

    pub fn draw<S: Strategy>(&mut self, s: &S) -> S::Value {
        s.new_tree(&mut self.runner)
            .expect("strategy rejected too often")
            .current()
    }
}

pub fn f64_of(v: &Value) -> Option<f64> {
    v.to_f64().filter(|x| x.is_finite())
}

pub fn eval_at(e: &Expr, v: &Valuation) -> Option<f64> {
    eval(e, v).ok().and_then(|x| f64_of(&x))
}

/// Whether `c` holds at `v` with the given margin.
pub fn holds_with_margin(c: &Condition, v: &Valuation) -> bool {
    match eval_at(&c.expr, v) {
        None => false,
        Some(x) => match c.shape {
            Shape::NonZero => x.abs() >= MARGIN,
            Shape::Positive | Shape::NonNegative => x >= MARGIN,
        },
    }
}

/// Central difference of `body` in `t` at `v`, evaluated as one expression so
/// the subtraction happens at working precision.
pub fn central_difference(body: &Expr, v: &Valuation, h: &Rational) -> Option<f64> {
    let t = v.get(&Symbol::Time)?.clone();
    let at = |x: Rational| body.substitute_one(&Symbol::Time, &Expr::rational(x));
    let quotient = Expr::div(
        Expr::sub(at(&t + h), at(&t - h)),
        Expr::rational(h * Rational::from_integer(2.into())),
    );
    eval_at(&quotient, v)
}

/// `|a - b| <= tol * max(1, |b|)`.
pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * b.abs().max(1.0)
}

pub fn h_default() -> Rational {
    rat(1, 1_000_000)
}

/// Every value defined on `[t - 2h, t + 2h]` sampled at five points.
pub fn defined_around(body: &Expr, v: &Valuation, h: &Rational) -> bool {
    let t = v[&Symbol::Time].clone();
    (-2i64..=2).all(|k| {
        let mut w = v.clone();
        w.insert(Symbol::Time, &t + h * Rational::from_integer(k.into()));
        eval_at(body, &w).is_some()
    })
}

pub fn magnitude_ok(x: f64) -> bool {
    x.abs() < 1e6
}

pub fn abs_rat(q: &Rational) -> Rational {
    q.abs()
}

pub fn named(v: &Valuation) -> BTreeMap<String, String> {
    v.iter().map(|(k, q)| (k.name().to_string(), q.to_string())).collect()
}

pub enum Check {
    Skipped,
    Agree,
    Disagree(String),
}

/// Finite difference against the symbolic derivative at `v`; skipped when a
/// side condition fails with margin or a value is undefined or huge.
pub fn soundness_check(body: &Expr, v: &Valuation, h: &Rational) -> Check {
    let Ok(d) = differentiate(body) else { return Check::Skipped };
    let mut conds: Vec<Condition> = d.conditions.iter().map(|c| c.condition.clone()).collect();
    conds.extend(definedness_conditions(body));
    if !conds.iter().all(|c| holds_with_margin(c, v)) || !defined_around(body, v, h) {
        return Check::Skipped;
    }
    let Some(sym) = eval_at(&d.derivative, v).filter(|x| magnitude_ok(*x)) else {
        return Check::Skipped;
    };
    let Some(fd) = central_difference(body, v, h) else { return Check::Skipped };
    if close(fd, sym, 1e-4) {
        Check::Agree
    } else {
        Check::Disagree(format!("finite difference {fd}, symbolic {sym}"))
    }
}

/// System families the builtin solver documents, instantiated with random
/// coefficients.
pub const FAMILIES: [&str; 12] = [
    "polynomial",
    "linear",
    "linear-forced",
    "quadratic-real",
    "quadratic-complex",
    "reciprocal",
    "rotation",
    "product-chain",
    "root",
    "logarithm",
    "trigonometric",
    "tangent",
];

pub fn family_instance(family: &str, rng: &mut impl rand::Rng) -> String {
    let nz = |rng: &mut dyn rand::RngCore| loop {
        let k = rand::Rng::gen_range(rng, -4i64..=4);
        if k != 0 {
            return k;
        }
    };
    let pos = |rng: &mut dyn rand::RngCore| rand::Rng::gen_range(rng, 1i64..=4);
    match family {
        "polynomial" => format!(
            "x' = {} + {}*t + {}*t^2",
            nz(rng),
            nz(rng),
            nz(rng)
        ),
        "linear" => format!("x' = {}*x + {}", nz(rng), nz(rng)),
        "linear-forced" => {
            let forcing = ["t", "sin(t)", "cos(2*t)", "exp(t)", "t^2"][rng.gen_range(0..5)];
            format!("x' = {}*x + {}*{forcing}", nz(rng), nz(rng))
        }
        "quadratic-real" => {
            let r1 = nz(rng);
            let r2 = r1 + pos(rng);
            format!("x' = {}*(x - {r1})*(x - {r2})", nz(rng))
        }
        "quadratic-complex" => format!("x' = {}*(x^2 + {})", nz(rng), pos(rng)),
        "reciprocal" => format!("x' = {}/({}*x + {})", nz(rng), nz(rng), nz(rng)),
        "rotation" => {
            let w = pos(rng);
            format!("x' = -{w}*y, y' = {w}*x")
        }
        "product-chain" => format!("x' = x*y, y' = {}", nz(rng)),
        "root" => format!("x' = {}*t^({}/{})", nz(rng), pos(rng), rng.gen_range(2..=5)),
        "logarithm" => format!("x' = {}*ln(t)", nz(rng)),
        "trigonometric" => format!(
            "x' = {}*sin({}*t) + {}*cos({}*t)",
            nz(rng),
            pos(rng),
            nz(rng),
            pos(rng)
        ),
        "tangent" => format!("x' = {}*tan({}*t)", nz(rng), pos(rng)),
        other => panic!("unknown family {other}"),
    }
}
