//! Antiderivatives in `t` for a small table of integrands.
//!
//! Supported terms, each times a `t`-free coefficient: `t^r` (any constant
//! `r`, including `1/t`), `t^n*exp(k*t)`, `t^n*sin(k*t + c)`,
//! `t^n*cos(k*t + c)` for natural `n`, `exp(k*t)*sin(w*t + c)`,
//! `exp(k*t)*cos(w*t + c)`, `t^r*ln(t)`, `ln(t)^n/t`, and `tan(k*t + c)`.
//! Anything else yields `None`.

use num_bigint::BigInt;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::canon::{self, poly_to_expr, ratfunc_to_expr, Atom, Monomial, Poly, RatFunc, Var};
use crate::expr::{Expr, Func, Rational, Symbol};

fn t_var() -> Var {
    Var::Sym(Symbol::Time)
}

pub(crate) fn poly_mentions(p: &Poly, sym: &Symbol) -> bool {
    p.terms()
        .any(|(m, _)| m.factors().iter().any(|(v, _)| var_mentions(v, sym)))
}

pub(crate) fn ratfunc_mentions(r: &RatFunc, sym: &Symbol) -> bool {
    poly_mentions(r.num(), sym) || poly_mentions(r.den(), sym)
}

pub(crate) fn var_mentions(v: &Var, sym: &Symbol) -> bool {
    match v {
        Var::Sym(s) => s == sym,
        Var::Atom(a) => match &**a {
            Atom::Sin(u)
            | Atom::Cos(u)
            | Atom::Exp(u)
            | Atom::Ln(u)
            | Atom::Arcsin(u)
            | Atom::Root(_, u)
            | Atom::Power(u, _)
            | Atom::Apply(_, u) => ratfunc_mentions(u, sym),
        },
    }
}

fn poly_depends_on_t(p: &Poly) -> bool {
    poly_mentions(p, &Symbol::Time)
}

fn var_depends_on_t(v: &Var) -> bool {
    var_mentions(v, &Symbol::Time)
}

fn is_t(r: &RatFunc) -> bool {
    *r == RatFunc::var(t_var())
}

/// Splits `r = kappa*t + beta` with `t`-free `kappa`, `beta`.
fn affine_in_t(r: &RatFunc) -> Option<(RatFunc, RatFunc)> {
    if poly_depends_on_t(r.den()) {
        return None;
    }
    let coeffs = r.num().coeffs_in(&t_var());
    if coeffs.len() > 2 || coeffs.iter().any(poly_depends_on_t) {
        return None;
    }
    let den = RatFunc::from_poly(r.den().clone());
    let beta = RatFunc::from_poly(coeffs[0].clone()).div(&den)?;
    let kappa = match coeffs.get(1) {
        Some(c) => RatFunc::from_poly(c.clone()).div(&den)?,
        None => RatFunc::zero(),
    };
    Some((kappa, beta))
}

/// `r = kappa*ln(t)` with `t`-free `kappa`.
fn multiple_of_ln_t(r: &RatFunc) -> Option<RatFunc> {
    let ln_t = Var::Atom(std::sync::Arc::new(Atom::Ln(RatFunc::var(t_var()))));
    if poly_depends_on_t(r.den()) {
        return None;
    }
    let coeffs = r.num().coeffs_in(&ln_t);
    if coeffs.len() != 2 || !coeffs[0].is_zero() || poly_depends_on_t(&coeffs[1]) {
        return None;
    }
    RatFunc::from_poly(coeffs[1].clone()).div(&RatFunc::from_poly(r.den().clone()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Trig {
    Sin,
    Cos,
}

/// One integrand term: `coef * t^(rat + sym) * exp(rate*t) * trig * ln(t)^ln_pow`.
#[derive(Debug, Clone)]
struct Term {
    coef: RatFunc,
    rat: Rational,
    sym: RatFunc,
    rate: RatFunc,
    trig: Option<(Trig, RatFunc, RatFunc)>,
    ln_pow: u32,
}

/// `den_t` holds the `t`-dependent denominator factors, applied with
/// negative exponents.
fn classify(m: &Monomial, q: &Rational, den_t: &Monomial, den: &RatFunc) -> Option<Term> {
    let mut term = Term {
        coef: RatFunc::constant(q.clone()).div(den)?,
        rat: Rational::zero(),
        sym: RatFunc::zero(),
        rate: RatFunc::zero(),
        trig: None,
        ln_pow: 0,
    };
    let factors = m
        .factors()
        .iter()
        .map(|(v, k)| (v, i64::from(*k)))
        .chain(den_t.factors().iter().map(|(v, k)| (v, -i64::from(*k))));
    for (v, k) in factors {
        if !var_depends_on_t(v) {
            term.coef = term.coef.mul(&RatFunc::var(v.clone()).powi(k)?);
            continue;
        }
        let kq = Rational::from_integer(BigInt::from(k));
        match v {
            Var::Sym(_) => term.rat += kq,
            Var::Atom(a) => match &**a {
                Atom::Root(d, u) if is_t(u) => {
                    term.rat += kq / Rational::from_integer(BigInt::from(*d));
                }
                Atom::Ln(u) if is_t(u) && k > 0 => term.ln_pow += k as u32,
                Atom::Exp(u) => {
                    if let Some(kappa) = multiple_of_ln_t(u) {
                        term.sym = term.sym.add(&kappa.scale(&kq));
                    } else {
                        let (kappa, beta) = affine_in_t(u)?;
                        if !beta.is_zero() {
                            term.coef = term.coef.mul(&atom_exp(beta).powi(k)?);
                        }
                        term.rate = term.rate.add(&kappa.scale(&kq));
                    }
                }
                Atom::Sin(u) | Atom::Cos(u) if k == 1 && term.trig.is_none() => {
                    let (kappa, beta) = affine_in_t(u)?;
                    let kind = if matches!(**a, Atom::Sin(_)) {
                        Trig::Sin
                    } else {
                        Trig::Cos
                    };
                    term.trig = Some((kind, kappa, beta));
                }
                _ => return None,
            },
        }
    }
    // A constant `rat + sym` with zero symbolic part and integer value is
    // the common case; fold a constant symbolic part into `rat`.
    if let Some(c) = term.sym.as_constant() {
        term.rat += c;
        term.sym = RatFunc::zero();
    }
    Some(term)
}

fn atom_exp(u: RatFunc) -> RatFunc {
    RatFunc::var(Var::Atom(std::sync::Arc::new(Atom::Exp(u))))
}

fn e(r: &RatFunc) -> Expr {
    ratfunc_to_expr(r)
}

fn q(r: &Rational) -> Expr {
    Expr::Const(r.clone())
}

fn t_pow(r: &Rational) -> Expr {
    if r.is_one() {
        Expr::Time
    } else if r.is_zero() {
        Expr::one()
    } else {
        Expr::pow(Expr::Time, q(r))
    }
}

fn natural(r: &Rational) -> Option<u32> {
    if r.is_integer() && !r.is_negative() {
        r.to_integer().to_u32()
    } else {
        None
    }
}

fn factorial_ratio(n: u32, j: u32) -> Rational {
    // n!/(n-j)!
    let mut acc = BigInt::one();
    for i in (n - j + 1)..=n {
        acc *= i;
    }
    Rational::from_integer(acc)
}

fn integrate_term(term: &Term) -> Option<Expr> {
    let t = Expr::Time;
    let body = match (&term.trig, term.rate.is_zero(), term.ln_pow) {
        (None, true, 0) => {
            if !term.sym.is_zero() {
                let p1 = Expr::add(e(&term.sym), q(&(term.rat.clone() + Rational::one())));
                Expr::div(Expr::pow(t, p1.clone()), p1)
            } else if term.rat == -Rational::one() {
                Expr::func(Func::Ln, t)
            } else {
                let p1 = term.rat.clone() + Rational::one();
                Expr::mul(q(&p1.recip()), t_pow(&p1))
            }
        }
        (None, true, n) => {
            if !term.sym.is_zero() {
                return None;
            }
            let ln = Expr::func(Func::Ln, t);
            if term.rat == -Rational::one() {
                let n1 = Rational::from_integer(BigInt::from(n + 1));
                Expr::mul(q(&n1.recip()), Expr::pow(ln, q(&n1)))
            } else if n == 1 {
                let p1 = term.rat.clone() + Rational::one();
                Expr::mul(
                    t_pow(&p1),
                    Expr::sub(
                        Expr::mul(q(&p1.recip()), ln),
                        q(&(p1.clone() * p1).recip()),
                    ),
                )
            } else {
                return None;
            }
        }
        (None, false, 0) => {
            if !term.sym.is_zero() {
                return None;
            }
            let n = natural(&term.rat)?;
            let kappa = e(&term.rate);
            let exp = Expr::func(Func::Exp, Expr::mul(kappa.clone(), t.clone()));
            // exp(k t) * sum_j (-1)^j n!/(n-j)! t^(n-j) / k^(j+1)
            let mut terms = Vec::new();
            for j in 0..=n {
                let c = factorial_ratio(n, j);
                let c = if j % 2 == 1 { -c } else { c };
                terms.push(Expr::div(
                    Expr::mul(q(&c), t_pow(&Rational::from_integer(BigInt::from(n - j)))),
                    Expr::pow(kappa.clone(), Expr::int(i64::from(j) + 1)),
                ));
            }
            Expr::mul(exp, Expr::sum(terms))
        }
        (Some((kind, w, beta)), false, 0) if term.sym.is_zero() && term.rat.is_zero() => {
            // ∫ exp(k t) sin(w t + b) = exp(k t) (k sin - w cos)/(k^2 + w^2)
            // ∫ exp(k t) cos(w t + b) = exp(k t) (k cos + w sin)/(k^2 + w^2)
            let (k, w) = (e(&term.rate), e(w));
            let arg = Expr::add(Expr::mul(w.clone(), t.clone()), e(beta));
            let sin = Expr::func(Func::Sin, arg.clone());
            let cos = Expr::func(Func::Cos, arg);
            let num = match kind {
                Trig::Sin => Expr::sub(Expr::mul(k.clone(), sin), Expr::mul(w.clone(), cos)),
                Trig::Cos => Expr::add(Expr::mul(k.clone(), cos), Expr::mul(w.clone(), sin)),
            };
            let norm = Expr::add(
                Expr::pow(k.clone(), Expr::int(2)),
                Expr::pow(w, Expr::int(2)),
            );
            Expr::div(Expr::mul(Expr::func(Func::Exp, Expr::mul(k, t)), num), norm)
        }
        (Some((kind, kappa, beta)), true, 0) => {
            if !term.sym.is_zero() {
                return None;
            }
            let n = natural(&term.rat)?;
            trig_parts(*kind, n, &e(kappa), &e(beta))
        }
        _ => return None,
    };
    Some(if term.coef.is_one() {
        body
    } else {
        Expr::mul(e(&term.coef), body)
    })
}

/// `∫ t^n * f(k*t + c) dt` for `f` in `{sin, cos}`.
fn trig_parts(kind: Trig, n: u32, kappa: &Expr, beta: &Expr) -> Expr {
    let arg = Expr::add(Expr::mul(kappa.clone(), Expr::Time), beta.clone());
    let sin = Expr::func(Func::Sin, arg.clone());
    let cos = Expr::func(Func::Cos, arg);
    let tn = t_pow(&Rational::from_integer(BigInt::from(n)));
    let first = match kind {
        Trig::Cos => Expr::div(Expr::mul(tn, sin), kappa.clone()),
        Trig::Sin => Expr::neg(Expr::div(Expr::mul(tn, cos), kappa.clone())),
    };
    if n == 0 {
        return first;
    }
    let rest = trig_parts(
        match kind {
            Trig::Cos => Trig::Sin,
            Trig::Sin => Trig::Cos,
        },
        n - 1,
        kappa,
        beta,
    );
    let scaled = Expr::mul(Expr::div(Expr::int(i64::from(n)), kappa.clone()), rest);
    match kind {
        // ∫ t^n cos = t^n sin/k - n/k ∫ t^(n-1) sin
        Trig::Cos => Expr::sub(first, scaled),
        // ∫ t^n sin = -t^n cos/k + n/k ∫ t^(n-1) cos
        Trig::Sin => Expr::add(first, scaled),
    }
}

/// Top-level summands with their signs folded in.
fn summands(e: &Expr, negate: bool, out: &mut Vec<Expr>) {
    match e {
        Expr::Add(a, b) => {
            summands(a, negate, out);
            summands(b, negate, out);
        }
        Expr::Neg(a) => summands(a, !negate, out),
        other => out.push(if negate {
            Expr::neg(other.clone())
        } else {
            other.clone()
        }),
    }
}

/// `c * tan(k*t + b)` with `t`-free `c`; returns `(c, k, b)`.
fn tan_term(e: &Expr) -> Option<(Expr, RatFunc, RatFunc)> {
    let mut factors = Vec::new();
    let mut stack = vec![e.clone()];
    let mut negate = false;
    while let Some(f) = stack.pop() {
        match f {
            Expr::Mul(a, b) => {
                stack.push(*a);
                stack.push(*b);
            }
            Expr::Neg(a) => {
                negate = !negate;
                stack.push(*a);
            }
            other => factors.push(other),
        }
    }
    let idx = factors
        .iter()
        .position(|f| matches!(f, Expr::Func(Func::Tan, _)))?;
    let Expr::Func(_, arg) = factors.remove(idx) else {
        unreachable!()
    };
    if factors.iter().any(Expr::depends_on_time) {
        return None;
    }
    let (kappa, beta) = affine_in_t(canon::normalize(&arg).ok()?.rat_func())?;
    if kappa.is_zero() {
        return None;
    }
    let mut coef = Expr::product(factors);
    if negate {
        coef = Expr::neg(coef);
    }
    Some((coef, kappa, beta))
}

/// An antiderivative of `f` with respect to `t`, if `f` is in the table.
pub fn antiderivative(f: &Expr) -> Option<Expr> {
    let mut parts = Vec::new();
    summands(f, false, &mut parts);
    let mut results = Vec::new();
    let mut rest = Vec::new();
    for p in parts {
        match tan_term(&p) {
            Some((c, kappa, beta)) => {
                let arg = Expr::add(Expr::mul(e(&kappa), Expr::Time), e(&beta));
                let ln_cos = Expr::func(Func::Ln, Expr::func(Func::Cos, arg));
                results.push(Expr::neg(Expr::div(Expr::mul(c, ln_cos), e(&kappa))));
            }
            None => rest.push(p),
        }
    }
    if !rest.is_empty() {
        let r = canon::normalize(&Expr::sum(rest)).ok()?;
        let r = r.rat_func();
        if !r.is_zero() {
            // The denominator must be a t-dependent monomial times a t-free
            // polynomial.
            let mut den_t = Monomial::one();
            for v in r.den().vars() {
                if var_depends_on_t(&v) {
                    den_t = den_t.mul(&Monomial::var(v.clone(), r.den().min_exponent(&v)));
                }
            }
            let den_rest = r.den().div_exact(&Poly::term(den_t.clone(), Rational::one()))?;
            if poly_depends_on_t(&den_rest) {
                return None;
            }
            let den = RatFunc::from_poly(den_rest);
            for (m, c) in r.num().terms() {
                let term = classify(m, c, &den_t, &den)?;
                results.push(integrate_term(&term)?);
            }
        }
    }
    Some(Expr::sum(results))
}

/// Pretty form of a canonical polynomial, used in diagnostics.
#[allow(dead_code)]
pub(crate) fn show_poly(p: &Poly) -> String {
    poly_to_expr(p).to_string()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::deriv::differentiate;
    use crate::parser::parse_expr;

    fn check(src: &str) {
        let f = parse_expr(src).unwrap();
        let big_f = antiderivative(&f).unwrap_or_else(|| panic!("no antiderivative for {src}"));
        let d = differentiate(&big_f).unwrap().derivative;
        assert!(canon::equal(&d, &f).unwrap(), "{src}: F = {big_f}, F' = {d}");
    }

    #[test]
    fn table_entries() {
        for src in [
            "t",
            "3*t^2 + 2*t + 1",
            "x0*t + y0",
            "1/t",
            "sqrt(t)",
            "t^(1/5)",
            "t^(-2)",
            "exp(2*t)",
            "t*exp(-t)",
            "t^2*exp(x0*t)",
            "sin(t)",
            "cos(3*t + 1)",
            "t*sin(2*t)",
            "t^2*cos(t)",
            "ln(t)",
            "t*ln(t)",
            "ln(t)/t",
            "tan(t)",
            "2*tan(3*t)",
            "t^sqrt(2)",
            "t*ln(t) - t + x0",
            "exp(2*t)*sin(t)",
            "exp(-t)*cos(3*t + 1)",
        ] {
            check(src);
        }
    }

    #[test]
    fn out_of_table() {
        for src in ["exp(t^2)", "arcsin(t)", "1/(t + 1)", "sin(t)^2*exp(t)", "t*exp(t)*sin(t)", "sin(x0*t^2)"] {
            assert!(antiderivative(&parse_expr(src).unwrap()).is_none(), "{src}");
        }
    }
}
