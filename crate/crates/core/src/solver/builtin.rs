//! The builtin catalogue: chain-integrable systems, scalar linear equations,
//! the rotation family and autonomous separable equations.

use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use num_traits::{Signed, Zero};

use super::integrate::{antiderivative, poly_mentions, ratfunc_mentions};
use super::{timed, Candidate, SolveResult, SolveStatus};
use crate::canon::{self, ratfunc_to_expr, Poly, RatFunc, Var};
use crate::certifier::{self, Domain, Solution};
use crate::deriv::{self, Shape};
use crate::expr::{Expr, Func, Rational, Symbol};
use crate::parser::{init_name, OdeSystem};

type Bindings = BTreeMap<String, Expr>;

pub fn solve_builtin(sys: &OdeSystem) -> SolveResult {
    let start = Instant::now();
    let status = match solve_branches(sys) {
        Ok(branches) => SolveStatus::Solved(
            branches
                .into_iter()
                .map(|b| Candidate::new(with_inferred_domain(Solution::new(b))))
                .collect(),
        ),
        Err(reason) => SolveStatus::Unsolved(reason),
    };
    timed("builtin", start, status)
}

fn solve_branches(sys: &OdeSystem) -> Result<Vec<Bindings>, String> {
    let vars: Vec<String> = sys.state_vars().map(String::from).collect();
    let mut branches = vec![Bindings::new()];
    let mut pending: BTreeSet<String> = vars.iter().cloned().collect();
    while !pending.is_empty() {
        let solved: BTreeSet<&String> = vars.iter().filter(|v| !pending.contains(*v)).collect();
        let deps = |v: &str| -> BTreeSet<String> {
            sys.rhs(v)
                .map(|e| {
                    e.free_symbols()
                        .into_iter()
                        .filter_map(|s| match s {
                            Symbol::State(n) if !solved.contains(&n) => Some(n),
                            _ => None,
                        })
                        .collect()
                })
                .unwrap_or_default()
        };
        let ready = pending
            .iter()
            .find(|v| deps(v).iter().all(|d| d == *v))
            .cloned();
        let mut next = Vec::new();
        if let Some(var) = ready {
            for b in &branches {
                let rhs = substitute(sys.rhs(&var).unwrap(), b);
                for sol in solve_scalar(&var, &rhs)? {
                    let mut nb = b.clone();
                    nb.insert(var.clone(), sol);
                    next.push(nb);
                }
            }
            pending.remove(&var);
        } else {
            let pair = pending.iter().find_map(|x| {
                let dx = deps(x);
                let y = dx.iter().next()?;
                (dx.len() == 1 && y != x && deps(y) == BTreeSet::from([x.clone()]))
                    .then(|| (x.clone(), y.clone()))
            });
            let Some((x, y)) = pair else {
                let names: Vec<&str> = pending.iter().map(String::as_str).collect();
                return Err(format!("coupled components {}", names.join(", ")));
            };
            for b in &branches {
                let fx = substitute(sys.rhs(&x).unwrap(), b);
                let fy = substitute(sys.rhs(&y).unwrap(), b);
                let (sx, sy) = solve_rotation(&x, &fx, &y, &fy)?;
                let mut nb = b.clone();
                nb.insert(x.clone(), sx);
                nb.insert(y.clone(), sy);
                next.push(nb);
            }
            pending.remove(&x);
            pending.remove(&y);
        }
        branches = next;
    }
    Ok(branches)
}

fn substitute(e: &Expr, b: &Bindings) -> Expr {
    let map: BTreeMap<Symbol, Expr> = b
        .iter()
        .map(|(v, e)| (Symbol::State(v.clone()), e.clone()))
        .collect();
    e.substitute(&map)
}

fn init(var: &str) -> Expr {
    Expr::init(&init_name(var))
}

fn tidy(e: Expr) -> Expr {
    canon::simplify(&e).unwrap_or(e)
}

// Constructors that fold the trivial cases so closed forms stay readable.
fn add(a: Expr, b: Expr) -> Expr {
    match (a.as_rational(), b.as_rational()) {
        (Some(x), Some(y)) => Expr::Const(x + y),
        (Some(x), _) if x.is_zero() => b,
        (_, Some(y)) if y.is_zero() => a,
        _ => Expr::add(a, b),
    }
}

fn sub(a: Expr, b: Expr) -> Expr {
    match (a.as_rational(), b.as_rational()) {
        (Some(x), Some(y)) => Expr::Const(x - y),
        (Some(x), _) if x.is_zero() => neg(b),
        (_, Some(y)) if y.is_zero() => a,
        _ => Expr::sub(a, b),
    }
}

fn neg(a: Expr) -> Expr {
    match a.as_rational() {
        Some(x) => Expr::Const(-x),
        None => match a {
            Expr::Neg(inner) => *inner,
            other => Expr::neg(other),
        },
    }
}

fn mul(a: Expr, b: Expr) -> Expr {
    match (a.as_rational(), b.as_rational()) {
        (Some(x), Some(y)) => Expr::Const(x * y),
        (Some(x), _) if x.is_zero() => Expr::zero(),
        (_, Some(y)) if y.is_zero() => Expr::zero(),
        (Some(x), _) if x == Rational::from_integer(1.into()) => b,
        (_, Some(y)) if y == Rational::from_integer(1.into()) => a,
        (Some(x), _) if x == Rational::from_integer((-1).into()) => neg(b),
        _ => Expr::mul(a, b),
    }
}

fn div(a: Expr, b: Expr) -> Expr {
    match (a.as_rational(), b.as_rational()) {
        (Some(x), Some(y)) if !y.is_zero() => Expr::Const(x / y),
        (_, Some(y)) if y == Rational::from_integer(1.into()) => a,
        _ => Expr::div(a, b),
    }
}

fn sqrt_of(q: &Rational) -> Expr {
    let num = q.numer().sqrt();
    let den = q.denom().sqrt();
    if &(&num * &num) == q.numer() && &(&den * &den) == q.denom() {
        Expr::Const(Rational::new(num, den))
    } else {
        Expr::func(Func::Sqrt, Expr::Const(q.clone()))
    }
}

/// `∫_0^t f`, or an antiderivative plus nothing when the lower limit is
/// undefined.
fn definite(f: &Expr) -> Option<Expr> {
    let big_f = antiderivative(f)?;
    let at_zero = big_f.substitute_one(&Symbol::Time, &Expr::zero());
    if !defined(&at_zero) {
        return Some(big_f);
    }
    match canon::normalize(&at_zero) {
        Ok(n) if n.is_zero() => Some(big_f),
        Ok(n) => Some(Expr::sub(big_f, n.to_expr())),
        Err(_) => Some(big_f),
    }
}

/// True when every definedness condition of a closed constant holds.
fn defined(e: &Expr) -> bool {
    if canon::normalize(e).is_err() {
        return false;
    }
    deriv::definedness_conditions(e).iter().all(|c| {
        match canon::normalize(&c.expr).ok().and_then(|n| n.as_rational()) {
            Some(q) => match c.shape {
                Shape::NonZero => !q.is_zero(),
                Shape::Positive => q.is_positive(),
                Shape::NonNegative => !q.is_negative(),
            },
            None => false,
        }
    })
}

fn solve_scalar(var: &str, rhs: &Expr) -> Result<Vec<Expr>, String> {
    let x0 = init(var);
    let sym = Symbol::State(var.to_string());
    if !rhs.contains_symbol(&sym) {
        let integral = definite(rhs)
            .ok_or_else(|| format!("no antiderivative in table for {var}' = {rhs}"))?;
        return Ok(vec![tidy(add(x0, integral))]);
    }
    let r = canon::normalize(rhs).map_err(|e| e.to_string())?;
    let r = r.rat_func();
    let v = Var::Sym(sym.clone());
    let not_poly = || format!("{var}' = {rhs} is not polynomial in {var}");
    let coeffs = r.num().coeffs_in(&v);
    if coeffs.iter().any(|c| poly_mentions(c, &sym)) {
        return Err(not_poly());
    }
    let den_in_x = r.den().degree_in(&v) > 0;
    if poly_mentions(r.den(), &sym) && !den_in_x {
        return Err(not_poly());
    }
    let den = RatFunc::from_poly(r.den().clone());
    let coeff = |c: &Poly| -> Result<RatFunc, String> {
        RatFunc::from_poly(c.clone())
            .div(&den)
            .ok_or_else(|| "zero denominator".to_string())
    };
    let autonomous = !ratfunc_mentions(r, &Symbol::Time);

    if !den_in_x && coeffs.len() == 2 {
        return solve_linear(var, &coeff(&coeffs[1])?, &coeff(&coeffs[0])?).map(|e| vec![e]);
    }
    if !den_in_x && coeffs.len() == 3 && autonomous {
        let [c0, c1, c2] = [&coeffs[0], &coeffs[1], &coeffs[2]].map(coeff);
        return solve_quadratic(var, &c2?, &c1?, &c0?).map(|e| vec![e]);
    }
    if den_in_x && autonomous && coeffs.len() == 1 {
        let dcoeffs = r.den().coeffs_in(&v);
        if dcoeffs.len() == 2 && !dcoeffs.iter().any(|c| poly_mentions(c, &sym)) {
            let k = RatFunc::from_poly(coeffs[0].clone());
            let m = RatFunc::from_poly(dcoeffs[1].clone()).div(&k);
            let n = RatFunc::from_poly(dcoeffs[0].clone()).div(&k);
            if let (Some(m), Some(n)) = (m, n) {
                return Ok(solve_reciprocal(var, &m, &n));
            }
        }
    }
    Err(format!("{var}' = {rhs} is outside the builtin catalogue"))
}

/// `x' = a*x + g` by integrating factor; `a` may depend on `t`.
fn solve_linear(var: &str, a: &RatFunc, g: &RatFunc) -> Result<Expr, String> {
    let x0 = init(var);
    let a_e = ratfunc_to_expr(a);
    let big_a = if ratfunc_mentions(a, &Symbol::Time) {
        definite(&a_e).ok_or_else(|| format!("no antiderivative in table for {a_e}"))?
    } else {
        mul(a_e, Expr::Time)
    };
    let inner = if g.is_zero() {
        x0
    } else {
        let integrand = Expr::mul(Expr::func(Func::Exp, neg(big_a.clone())), ratfunc_to_expr(g));
        let integral = definite(&integrand)
            .ok_or_else(|| format!("no antiderivative in table for {integrand}"))?;
        add(x0, integral)
    };
    Ok(tidy(Expr::mul(Expr::func(Func::Exp, big_a), inner)))
}

/// `x' = a*x^2 + b*x + c` with constant coefficients.
fn solve_quadratic(var: &str, a: &RatFunc, b: &RatFunc, c: &RatFunc) -> Result<Expr, String> {
    let x0 = init(var);
    let disc = b.mul(b).sub(&a.mul(c).scale(&Rational::from_integer(4.into())));
    let Some(disc) = disc.as_constant() else {
        return Err(format!("{var}': discriminant {} is not a number", ratfunc_to_expr(&disc)));
    };
    let [a, b] = [a, b].map(ratfunc_to_expr);
    let two_a = mul(Expr::int(2), a.clone());
    let t = Expr::Time;
    if disc.is_zero() {
        // x' = a (x - r)^2
        let r = neg(div(b, two_a));
        let u0 = sub(x0, r.clone());
        let den = sub(Expr::one(), mul(mul(a, u0.clone()), t));
        return Ok(add(r, div(u0, den)));
    }
    if disc.is_positive() {
        let s = sqrt_of(&disc);
        let r1 = div(add(neg(b.clone()), s.clone()), two_a.clone());
        let r2 = div(sub(neg(b), s.clone()), two_a);
        let e = Expr::func(Func::Exp, mul(s, t));
        let p = sub(x0.clone(), r2.clone());
        let q = sub(x0, r1.clone());
        let num = sub(mul(r1, p.clone()), mul(mul(r2, q.clone()), e.clone()));
        let den = sub(p, mul(q, e));
        return Ok(div(num, den));
    }
    // x + b/(2a) = w tan(a w t + c0) with w^2 = -disc/(4a^2)
    let h = div(b, two_a.clone());
    let w = div(sqrt_of(&-disc.clone()), two_a);
    let theta = mul(div(sqrt_of(&-disc), Expr::int(2)), t);
    let (sin, cos) = (
        Expr::func(Func::Sin, theta.clone()),
        Expr::func(Func::Cos, theta),
    );
    let u0 = add(x0, h.clone());
    let num = mul(
        w.clone(),
        add(mul(w.clone(), sin.clone()), mul(u0.clone(), cos.clone())),
    );
    let den = sub(mul(w, cos), mul(u0, sin));
    Ok(sub(div(num, den), h))
}

/// `x' = 1/(m*x + n)`: both branches of the quadratic inversion.
fn solve_reciprocal(var: &str, m: &RatFunc, n: &RatFunc) -> Vec<Expr> {
    let x0 = init(var);
    let [m, n] = [m, n].map(ratfunc_to_expr);
    // (m x + n)^2 = (m x0 + n)^2 + 2 m t
    let w0 = add(mul(m.clone(), x0), n.clone());
    let radicand = add(
        Expr::pow(w0, Expr::int(2)),
        mul(mul(Expr::int(2), m.clone()), Expr::Time),
    );
    let root = Expr::func(Func::Sqrt, radicand);
    vec![
        div(add(neg(n.clone()), root.clone()), m.clone()),
        div(sub(neg(n), root), m),
    ]
}

/// `(x', y') = (-w*y, w*x)` with constant `w`.
fn solve_rotation(x: &str, fx: &Expr, y: &str, fy: &Expr) -> Result<(Expr, Expr), String> {
    let coupled = || format!("coupled components {x}, {y}");
    let linear_in = |f: &Expr, other: &str| -> Option<RatFunc> {
        let r = canon::normalize(f).ok()?;
        let r = r.rat_func();
        let sym = Symbol::State(other.to_string());
        if poly_mentions(r.den(), &sym) {
            return None;
        }
        let coeffs = r.num().coeffs_in(&Var::Sym(sym.clone()));
        if coeffs.len() != 2 || !coeffs[0].is_zero() {
            return None;
        }
        let c = RatFunc::from_poly(coeffs[1].clone()).div(&RatFunc::from_poly(r.den().clone()))?;
        let constant = !ratfunc_mentions(&c, &Symbol::Time)
            && !ratfunc_mentions(&c, &Symbol::State(x.to_string()))
            && !ratfunc_mentions(&c, &Symbol::State(y.to_string()));
        constant.then_some(c)
    };
    let cx = linear_in(fx, y).ok_or_else(coupled)?;
    let cy = linear_in(fy, x).ok_or_else(coupled)?;
    if !cx.add(&cy).is_zero() {
        return Err(coupled());
    }
    let w = ratfunc_to_expr(&cy);
    let arg = mul(w, Expr::Time);
    let (sin, cos) = (
        Expr::func(Func::Sin, arg.clone()),
        Expr::func(Func::Cos, arg),
    );
    let (x0, y0) = (init(x), init(y));
    Ok((
        sub(mul(x0.clone(), cos.clone()), mul(y0.clone(), sin.clone())),
        add(mul(x0, sin), mul(y0, cos)),
    ))
}

/// Restricts to `t > 0` when every open condition is about `t` alone and
/// holds there.
fn with_inferred_domain(sol: Solution) -> Solution {
    let mut pending = Vec::new();
    for b in sol.bindings.values() {
        pending.extend(deriv::definedness_conditions(b));
        if let Ok(d) = deriv::differentiate(b) {
            pending.extend(d.conditions.into_iter().map(|sc| sc.condition));
        }
    }
    let whole = Domain::whole();
    let positive = Domain::positive();
    let open: Vec<_> = pending
        .iter()
        .filter(|c| !certifier::discharge(c, &whole, &[]).is_discharged())
        .collect();
    let only_t = open
        .iter()
        .all(|c| c.expr.free_symbols().iter().all(|s| *s == Symbol::Time));
    if !open.is_empty()
        && only_t
        && open
            .iter()
            .all(|c| certifier::discharge(c, &positive, &[]).is_discharged())
    {
        sol.with_domain(positive)
    } else {
        sol
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::certifier::{certify, Status};
    use crate::parser::{parse_expr_with, parse_system};

    fn solve(src: &str) -> (OdeSystem, SolveResult) {
        let sys = parse_system(src).unwrap();
        let r = solve_builtin(&sys);
        (sys, r)
    }

    fn statuses(src: &str) -> Vec<Status> {
        let (sys, r) = solve(src);
        assert!(r.is_solved(), "{src}: {:?}", r.status);
        r.candidates()
            .iter()
            .map(|c| certify(&sys, &c.solution, &[]).unwrap().status)
            .collect()
    }

    fn binding(sys: &OdeSystem, r: &SolveResult, var: &str) -> Expr {
        let _ = sys;
        r.candidates()[0].solution.bindings[var].clone()
    }

    fn same(sys: &OdeSystem, e: &Expr, text: &str) -> bool {
        canon::equal(e, &parse_expr_with(text, &sys.context()).unwrap()).unwrap()
    }

    #[test]
    fn example_one() {
        let (sys, r) = solve("x' = t, y' = x, z' = 1");
        assert!(same(&sys, &binding(&sys, &r, "x"), "t^2/2 + x0"));
        assert!(same(&sys, &binding(&sys, &r, "y"), "t^3/6 + x0*t + y0"));
        assert!(same(&sys, &binding(&sys, &r, "z"), "z0 + t"));
        assert_eq!(statuses("x' = t, y' = x, z' = 1"), vec![Status::Certified]);
    }

    #[test]
    fn riccati_has_nonzero_condition() {
        let (sys, r) = solve("x' = x^2");
        let c = &r.candidates()[0];
        assert_eq!(c.solution.bindings["x"].to_string(), "x0/(1 - x0*t)");
        assert!(same(&sys, &c.solution.bindings["x"], "x0/(1 - x0*t)"));
        assert_eq!(
            c.conditions.iter().map(ToString::to_string).collect::<Vec<_>>(),
            vec!["1 - x0*t != 0"]
        );
        assert_eq!(statuses("x' = x^2"), vec![Status::ConditionallyCertified]);
    }

    #[test]
    fn trivial_and_rotation() {
        let (sys, r) = solve("x' = 0");
        assert!(same(&sys, &binding(&sys, &r, "x"), "x0"));
        let (sys, r) = solve("x' = -y, y' = x");
        assert!(same(&sys, &binding(&sys, &r, "x"), "x0*cos(t) - y0*sin(t)"));
        assert!(same(&sys, &binding(&sys, &r, "y"), "x0*sin(t) + y0*cos(t)"));
        assert_eq!(statuses("x' = -y, y' = x"), vec![Status::Certified]);
        assert_eq!(statuses("x' = -w*y, y' = w*x"), vec![Status::Certified]);
    }

    #[test]
    fn catalogue_classes_certify() {
        for (src, expected) in [
            ("x' = x + t", Status::Certified),
            ("x' = 1/t", Status::Certified),
            ("x' = x*y, y' = 3", Status::Certified),
            ("x' = ln(t), y' = x", Status::Certified),
            ("x' = sqrt(t)", Status::Certified),
            ("x' = -2*x + sin(t)", Status::Certified),
            ("x' = x^2 - 3*x + 2", Status::ConditionallyCertified),
            ("x' = x^2 + 1", Status::ConditionallyCertified),
            ("x' = tan(t)", Status::ConditionallyCertified),
        ] {
            for s in statuses(src) {
                assert_eq!(s, expected, "{src}");
            }
        }
    }

    #[test]
    fn reciprocal_has_two_branches() {
        let (_, r) = solve("x' = 1/(2*x - 1)");
        assert_eq!(r.candidates().len(), 2);
        assert_eq!(
            statuses("x' = 1/(2*x - 1)"),
            vec![Status::ConditionallyCertified; 2]
        );
    }

    #[test]
    fn log_domain_is_positive_reals() {
        let (_, r) = solve("x' = 1/t");
        assert_eq!(r.candidates()[0].solution.domain, Domain::positive());
    }

    #[test]
    fn outside_catalogue() {
        for src in [
            "x' = sin(x)/ln(x)",
            "x' = 2*x + y, y' = x",
            "x' = x^2 - t",
            "x' = y, y' = exp(t^2)",
            "x' = arcsin(t)",
        ] {
            let (_, r) = solve(src);
            assert!(
                matches!(r.status, SolveStatus::Unsolved(_)),
                "{src}: {:?}",
                r.status
            );
        }
    }
}
