//! Numeric evaluation of expressions.
//!
//! Rational arithmetic and integer powers stay exact. Anything transcendental
//! falls back to 128-bit binary floating point, which is kept for the rest of
//! the computation.

use std::cell::RefCell;
use std::fmt;

use astro_float::{BigFloat, Consts, Radix, RoundingMode};
use num_bigint::BigInt;
use num_traits::{One, Signed, ToPrimitive, Zero};
use thiserror::Error;

use crate::expr::{Expr, Func, Rational, Symbol, Valuation};

/// Working precision, in bits, of inexact evaluation.
pub const PRECISION: usize = 128;

/// `tan` is undefined where `|cos|` falls below this.
pub const POLE_TOLERANCE: f64 = 1e-12;

const RM: RoundingMode = RoundingMode::ToEven;
const MAX_EXACT_EXPONENT: u32 = 4096;

thread_local! {
    static CONSTS: RefCell<Consts> = RefCell::new(Consts::new().expect("astro-float constants"));
}

fn with_consts<R>(f: impl FnOnce(&mut Consts) -> R) -> R {
    CONSTS.with(|cc| f(&mut cc.borrow_mut()))
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("unbound symbol `{0}`")]
    UnboundSymbol(String),
    #[error("tuples have no scalar value")]
    NotScalar,
}

/// Result of evaluating an expression at a point.
#[derive(Debug, Clone)]
pub enum Value {
    Exact(Rational),
    /// Inexact value together with its precision in bits.
    Approx(BigFloat, usize),
    Undefined,
}

impl Value {
    pub fn is_defined(&self) -> bool {
        !matches!(self, Value::Undefined)
    }

    pub fn is_exact(&self) -> bool {
        matches!(self, Value::Exact(_))
    }

    pub fn exact(&self) -> Option<&Rational> {
        match self {
            Value::Exact(q) => Some(q),
            _ => None,
        }
    }

    pub fn precision(&self) -> Option<usize> {
        match self {
            Value::Exact(_) => None,
            Value::Approx(_, p) => Some(*p),
            Value::Undefined => None,
        }
    }

    pub fn to_f64(&self) -> Option<f64> {
        match self {
            Value::Exact(q) => rational_to_f64(q),
            Value::Approx(x, _) => float_to_f64(x),
            Value::Undefined => None,
        }
    }

    fn to_float(&self) -> Option<BigFloat> {
        match self {
            Value::Exact(q) => Some(rational_to_float(q)),
            Value::Approx(x, _) => Some(x.clone()),
            Value::Undefined => None,
        }
    }

    /// Absolute and relative difference of two defined values, computed at
    /// working precision before rounding to `f64`. The relative gap is
    /// scaled by `max(1, |a|, |b|)`.
    pub fn gap(&self, other: &Value) -> Option<(f64, f64)> {
        if let (Value::Exact(a), Value::Exact(b)) = (self, other) {
            let abs = (a - b).abs();
            let scale = a.abs().max(b.abs()).max(Rational::one());
            return Some((rational_to_f64(&abs)?, rational_to_f64(&(abs / scale))?));
        }
        let a = self.to_float()?;
        let b = other.to_float()?;
        let diff = a.sub(&b, PRECISION, RM).abs();
        let abs = float_to_f64(&diff)?;
        let scale = float_to_f64(&a)?
            .abs()
            .max(float_to_f64(&b)?.abs())
            .max(1.0);
        Some((abs, abs / scale))
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Exact(q) if q.is_integer() => write!(f, "{}", q.numer()),
            Value::Exact(q) => write!(f, "{}/{}", q.numer(), q.denom()),
            Value::Approx(x, _) => match float_to_f64(x) {
                Some(v) => write!(f, "{v:e}"),
                None => write!(f, "{x}"),
            },
            Value::Undefined => write!(f, "undefined"),
        }
    }
}

pub fn rational_to_f64(q: &Rational) -> Option<f64> {
    if let (Some(n), Some(d)) = (q.numer().to_f64(), q.denom().to_f64()) {
        if n.is_finite() && d.is_finite() && d != 0.0 {
            return Some(n / d);
        }
    }
    float_to_f64(&rational_to_float(q))
}

pub fn rational_to_float(q: &Rational) -> BigFloat {
    with_consts(|cc| {
        let n = BigFloat::parse(&q.numer().to_string(), Radix::Dec, PRECISION, RM, cc);
        if q.denom().is_one() {
            return n;
        }
        let d = BigFloat::parse(&q.denom().to_string(), Radix::Dec, PRECISION, RM, cc);
        n.div(&d, PRECISION, RM)
    })
}

pub fn float_to_f64(x: &BigFloat) -> Option<f64> {
    if x.is_nan() {
        return None;
    }
    if x.is_zero() {
        return Some(0.0);
    }
    x.to_string().parse::<f64>().ok()
}

/// Exact `q`-th root of a non-negative rational, when it exists.
fn exact_root(x: &Rational, q: u32) -> Option<Rational> {
    if x.is_negative() {
        return None;
    }
    let root_int = |n: &BigInt| -> Option<BigInt> {
        let r = n.nth_root(q);
        (num_traits::pow::Pow::pow(&r, q) == *n).then_some(r)
    };
    Some(Rational::new(root_int(x.numer())?, root_int(x.denom())?))
}

fn approx(x: BigFloat) -> Value {
    if x.is_nan() || x.is_inf() {
        Value::Undefined
    } else {
        Value::Approx(x, PRECISION)
    }
}

fn add(a: Value, b: Value) -> Value {
    match (a, b) {
        (Value::Exact(x), Value::Exact(y)) => Value::Exact(x + y),
        (a, b) => match (a.to_float(), b.to_float()) {
            (Some(x), Some(y)) => approx(x.add(&y, PRECISION, RM)),
            _ => Value::Undefined,
        },
    }
}

fn mul(a: Value, b: Value) -> Value {
    match (a, b) {
        (Value::Exact(x), Value::Exact(y)) => Value::Exact(x * y),
        (a, b) => match (a.to_float(), b.to_float()) {
            (Some(x), Some(y)) => approx(x.mul(&y, PRECISION, RM)),
            _ => Value::Undefined,
        },
    }
}

fn div(a: Value, b: Value) -> Value {
    match (a, b) {
        (_, Value::Exact(y)) if y.is_zero() => Value::Undefined,
        (Value::Exact(x), Value::Exact(y)) => Value::Exact(x / y),
        (a, b) => match (a.to_float(), b.to_float()) {
            (Some(_), Some(y)) if y.is_zero() => Value::Undefined,
            (Some(x), Some(y)) => approx(x.div(&y, PRECISION, RM)),
            _ => Value::Undefined,
        },
    }
}

fn neg(a: Value) -> Value {
    match a {
        Value::Exact(x) => Value::Exact(-x),
        Value::Approx(x, p) => Value::Approx(x.neg(), p),
        Value::Undefined => Value::Undefined,
    }
}

fn sign_of(v: &Value) -> Option<std::cmp::Ordering> {
    use std::cmp::Ordering;
    match v {
        Value::Exact(q) => Some(q.cmp(&Rational::zero())),
        Value::Approx(x, _) => Some(if x.is_zero() {
            Ordering::Equal
        } else if x.is_negative() {
            Ordering::Less
        } else {
            Ordering::Greater
        }),
        Value::Undefined => None,
    }
}

fn pow(base: Value, exp: Value) -> Value {
    use std::cmp::Ordering::*;
    let (Some(bs), Some(es)) = (sign_of(&base), sign_of(&exp)) else {
        return Value::Undefined;
    };
    if let Value::Exact(e) = &exp {
        if e.is_integer() {
            let n = e.to_integer();
            if bs == Equal {
                return match es {
                    Less => Value::Undefined,
                    Equal => Value::Exact(Rational::one()),
                    Greater => Value::Exact(Rational::zero()),
                };
            }
            if let (Value::Exact(b), Some(k)) = (&base, n.to_i32()) {
                if k.unsigned_abs() <= MAX_EXACT_EXPONENT {
                    return Value::Exact(num_traits::pow::Pow::pow(b, k));
                }
            }
            let Some(x) = base.to_float() else {
                return Value::Undefined;
            };
            let magnitude = x.abs();
            let ef = rational_to_float(e);
            let result = with_consts(|cc| magnitude.pow(&ef, PRECISION, RM, cc));
            let odd = n.is_odd_integer();
            return approx(if bs == Less && odd { result.neg() } else { result });
        }
        // Non-integer rational exponent: real only for non-negative bases.
        match bs {
            Less => return Value::Undefined,
            Equal => {
                return if es == Greater {
                    Value::Exact(Rational::zero())
                } else {
                    Value::Undefined
                }
            }
            Greater => {}
        }
        if let Value::Exact(b) = &base {
            if let Ok(q) = u32::try_from(e.denom().clone()) {
                if let (Some(root), Some(p)) = (exact_root(b, q), e.numer().to_i32()) {
                    if p.unsigned_abs() <= MAX_EXACT_EXPONENT {
                        return Value::Exact(num_traits::pow::Pow::pow(&root, p));
                    }
                }
            }
        }
    }
    match bs {
        Less => Value::Undefined,
        Equal => {
            if es == Greater {
                Value::Exact(Rational::zero())
            } else {
                Value::Undefined
            }
        }
        Greater => {
            let (Some(x), Some(y)) = (base.to_float(), exp.to_float()) else {
                return Value::Undefined;
            };
            approx(with_consts(|cc| x.pow(&y, PRECISION, RM, cc)))
        }
    }
}

trait OddInteger {
    fn is_odd_integer(&self) -> bool;
}

impl OddInteger for BigInt {
    fn is_odd_integer(&self) -> bool {
        num_integer::Integer::is_odd(self)
    }
}

fn apply(func: &Func, arg: Value) -> Value {
    use std::cmp::Ordering::*;
    let Some(sign) = sign_of(&arg) else {
        return Value::Undefined;
    };
    let zero_arg = sign == Equal;
    match func {
        Func::Sin if zero_arg => Value::Exact(Rational::zero()),
        Func::Cos | Func::Exp if zero_arg => Value::Exact(Rational::one()),
        Func::Tan | Func::Arcsin if zero_arg => Value::Exact(Rational::zero()),
        Func::Sqrt => match sign {
            Less => Value::Undefined,
            Equal => Value::Exact(Rational::zero()),
            Greater => {
                if let Value::Exact(q) = &arg {
                    if let Some(r) = exact_root(q, 2) {
                        return Value::Exact(r);
                    }
                }
                approx(arg.to_float().unwrap().sqrt(PRECISION, RM))
            }
        },
        Func::Ln => {
            if sign != Greater {
                return Value::Undefined;
            }
            if matches!(&arg, Value::Exact(q) if q.is_one()) {
                return Value::Exact(Rational::zero());
            }
            let x = arg.to_float().unwrap();
            approx(with_consts(|cc| x.ln(PRECISION, RM, cc)))
        }
        Func::Arcsin => {
            let x = arg.to_float().unwrap();
            let one = BigFloat::from_f64(1.0, PRECISION);
            if x.abs().cmp(&one).is_none_or(|c| c > 0) {
                return Value::Undefined;
            }
            approx(with_consts(|cc| x.asin(PRECISION, RM, cc)))
        }
        Func::Sin => {
            let x = arg.to_float().unwrap();
            approx(with_consts(|cc| x.sin(PRECISION, RM, cc)))
        }
        Func::Cos => {
            let x = arg.to_float().unwrap();
            approx(with_consts(|cc| x.cos(PRECISION, RM, cc)))
        }
        Func::Tan => {
            let x = arg.to_float().unwrap();
            let (s, c) = with_consts(|cc| (x.sin(PRECISION, RM, cc), x.cos(PRECISION, RM, cc)));
            match float_to_f64(&c) {
                Some(cf) if cf.abs() >= POLE_TOLERANCE => approx(s.div(&c, PRECISION, RM)),
                _ => Value::Undefined,
            }
        }
        Func::Exp => {
            let x = arg.to_float().unwrap();
            approx(with_consts(|cc| x.exp(PRECISION, RM, cc)))
        }
        Func::Custom(_) => Value::Undefined,
    }
}

/// Evaluates `e` at `v`. Division by zero, logarithms and square roots of
/// non-positive (resp. negative) numbers, `arcsin` outside `[-1, 1]` and
/// poles of `tan` yield [`Value::Undefined`].
pub fn eval(e: &Expr, v: &Valuation) -> Result<Value, EvalError> {
    Ok(match e {
        Expr::Const(q) => Value::Exact(q.clone()),
        Expr::Time | Expr::State(_) | Expr::Param(_) | Expr::Init(_) => {
            let sym = e.as_symbol().unwrap();
            match v.get(&sym) {
                Some(q) => Value::Exact(q.clone()),
                None => return Err(EvalError::UnboundSymbol(sym.name().to_string())),
            }
        }
        Expr::Neg(a) => neg(eval(a, v)?),
        Expr::Add(a, b) => add(eval(a, v)?, eval(b, v)?),
        Expr::Mul(a, b) => mul(eval(a, v)?, eval(b, v)?),
        Expr::Div(a, b) => div(eval(a, v)?, eval(b, v)?),
        Expr::Pow(a, b) => pow(eval(a, v)?, eval(b, v)?),
        Expr::Func(f, a) => apply(f, eval(a, v)?),
        Expr::Tuple(_) => return Err(EvalError::NotScalar),
    })
}

/// Convenience wrapper returning an `f64`, `None` when undefined.
pub fn eval_f64(e: &Expr, v: &Valuation) -> Result<Option<f64>, EvalError> {
    Ok(eval(e, v)?.to_f64())
}

/// Builds a valuation with `t` bound to `time` and the given named symbols.
pub fn valuation<'a>(
    time: Option<Rational>,
    others: impl IntoIterator<Item = (&'a Symbol, Rational)>,
) -> Valuation {
    let mut v = Valuation::new();
    if let Some(t) = time {
        v.insert(Symbol::Time, t);
    }
    for (s, q) in others {
        v.insert(s.clone(), q);
    }
    v
}
