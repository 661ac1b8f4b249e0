mod common;

use std::collections::BTreeMap;

use common::*;
use odecert::canon::{self, normalize};
use odecert::certifier::{certify, project, Assumption, RangeVerdict, Solution, Status};
use odecert::deriv::{definedness_conditions, differentiate, replay, Condition, RuleSet};
use odecert::eval::eval;
use odecert::expr::{rat, Expr, Func, Rational, Symbol, Valuation};
use odecert::parser::{parse_expr_with, OdeSystem, ParseContext};
use odecert::refuter::Refuter;
use proptest::prelude::*;

fn reparse(e: &Expr) -> Expr {
    let ctx = ParseContext::from_symbols(&e.free_symbols());
    parse_expr_with(&e.to_string(), &ctx).unwrap()
}

fn count_nodes(e: &Expr, pred: &dyn Fn(&Expr) -> bool) -> usize {
    usize::from(pred(e)) + e.children().iter().map(|c| count_nodes(c, pred)).sum::<usize>()
}

/// Both sides defined, side conditions of both held with margin, and the
/// values agree to `tol`.
fn agree_where_defined(a: &Expr, b: &Expr, v: &Valuation, tol: f64) -> Result<(), String> {
    let mut conds = definedness_conditions(a);
    conds.extend(definedness_conditions(b));
    if !conds.iter().all(|c| holds_with_margin(c, v)) {
        return Ok(());
    }
    match (eval_at(a, v), eval_at(b, v)) {
        (Some(x), Some(y)) if magnitude_ok(x) && magnitude_ok(y) => {
            if close(x, y, tol) {
                Ok(())
            } else {
                Err(format!("{a} = {x}, {b} = {y} at {:?}", named(v)))
            }
        }
        _ => Ok(()),
    }
}

/// Pairs that are equal as functions wherever both are defined.
fn equal_pair() -> impl Strategy<Value = (Expr, Expr)> {
    (body(2), body(2), body(2), 0usize..6).prop_map(|(a, b, c, k)| match k {
        0 => (
            Expr::mul(Expr::add(a.clone(), b.clone()), c.clone()),
            Expr::add(Expr::mul(a, c.clone()), Expr::mul(b, c)),
        ),
        1 => (
            Expr::div(Expr::sub(a.clone(), b.clone()), c.clone()),
            Expr::sub(Expr::div(a, c.clone()), Expr::div(b, c)),
        ),
        2 => (
            Expr::sub(Expr::pow(a.clone(), Expr::int(2)), Expr::pow(b.clone(), Expr::int(2))),
            Expr::mul(Expr::sub(a.clone(), b.clone()), Expr::add(a, b)),
        ),
        3 => (
            Expr::add(
                Expr::add(
                    Expr::pow(Expr::func(Func::Sin, a.clone()), Expr::int(2)),
                    Expr::pow(Expr::func(Func::Cos, a), Expr::int(2)),
                ),
                b.clone(),
            ),
            Expr::add(Expr::one(), b),
        ),
        4 => (
            Expr::mul(Expr::func(Func::Exp, a.clone()), Expr::func(Func::Exp, b.clone())),
            Expr::func(Func::Exp, Expr::add(a, b)),
        ),
        _ => (Expr::add(a.clone(), b.clone()), Expr::add(b, a)),
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn substitution_commutes_with_evaluation(e in body(5), k in body(2), v in point()) {
        let sym = Symbol::Init("x0".into());
        let lhs = eval(&e.substitute_one(&sym, &k), &v).unwrap();
        let Some(kv) = eval(&k, &v).unwrap().exact().cloned() else { return Ok(()) };
        let mut w = v.clone();
        w.insert(sym, kv);
        let rhs = eval(&e, &w).unwrap();
        if let (Some(a), Some(b)) = (f64_of(&lhs), f64_of(&rhs)) {
            prop_assert!(close(a, b, 1e-12), "{} vs {}", a, b);
        }
    }

    #[test]
    fn operator_count_ignores_negation(e in body(4)) {
        prop_assert_eq!(Expr::neg(e.clone()).count_operators(), e.count_operators());
    }

    #[test]
    fn rationals_round_trip(n in -10_000i64..10_000, d in 1i64..10_000) {
        let q = rat(n, d);
        let printed = Expr::rational(q.clone()).to_string();
        let back = reparse(&Expr::rational(q.clone()));
        prop_assert_eq!(back.as_rational(), Some(q), "{}", printed);
    }

    #[test]
    fn printing_is_a_fixpoint_of_parsing(e in body(6)) {
        let once = e.to_string();
        let again = reparse(&e).to_string();
        prop_assert_eq!(once, again);
    }

    #[test]
    fn derivatives_match_finite_differences(b in time_body(4), v in point()) {
        if let Check::Disagree(msg) = soundness_check(&b, &v, &h_default()) {
            prop_assert!(false, "{} at {:?}: {}", b, named(&v), msg);
        }
    }

    #[test]
    fn replay_reproduces_the_derivative(b in body(5)) {
        let rules = RuleSet::standard();
        let d = differentiate(&b).unwrap();
        prop_assert_eq!(&replay(&b, &d.trace, &rules).unwrap(), &d.derivative);
        prop_assert_eq!(differentiate(&b).unwrap(), d);
    }

    #[test]
    fn one_proviso_per_partial_node(b in body(5)) {
        let d = differentiate(&b).unwrap();
        let from = |rule: &str| d.conditions.iter().filter(|c| c.origin.rule == rule).count();
        prop_assert_eq!(from("div"), count_nodes(&b, &|e| matches!(e, Expr::Div(..))));
        for f in [Func::Sqrt, Func::Ln, Func::Arcsin, Func::Tan] {
            let n = count_nodes(&b, &|e| matches!(e, Expr::Func(g, _) if *g == f));
            prop_assert_eq!(from(f.name()), n, "{}", f);
        }
    }

    #[test]
    fn differentiation_is_linear(f in body(3), g in body(3)) {
        let sum = differentiate(&Expr::add(f.clone(), g.clone())).unwrap().derivative;
        let parts = Expr::add(
            differentiate(&f).unwrap().derivative,
            differentiate(&g).unwrap().derivative,
        );
        if let Ok(eq) = canon::equal(&sum, &parts) {
            prop_assert!(eq);
        }
    }

    #[test]
    fn equality_is_reflexive_and_symmetric(a in body(3), b in body(3)) {
        prop_assert!(canon::equal(&a, &a).unwrap());
        if let (Ok(ab), Ok(ba)) = (canon::equal(&a, &b), canon::equal(&b, &a)) {
            prop_assert_eq!(ab, ba);
        }
    }

    #[test]
    fn equal_pairs_agree_numerically((a, b) in equal_pair(), vs in prop::collection::vec(point(), 100)) {
        let Ok(true) = canon::equal(&a, &b) else { return Ok(()) };
        for v in &vs {
            if let Err(msg) = agree_where_defined(&a, &b, v, 1e-8) {
                prop_assert!(false, "{}", msg);
            }
        }
    }

    #[test]
    fn normal_forms_agree_with_their_inputs(e in body(3), vs in prop::collection::vec(point(), 20)) {
        let Ok(n) = normalize(&e) else { return Ok(()) };
        let back = n.to_expr();
        for v in &vs {
            if let Err(msg) = agree_where_defined(&e, &back, v, 1e-8) {
                prop_assert!(false, "{}", msg);
            }
        }
    }

    #[test]
    fn normalisation_is_idempotent(e in body(4)) {
        let Ok(n) = normalize(&e) else { return Ok(()) };
        let again = normalize(&reparse(&n.to_expr())).unwrap();
        prop_assert_eq!(again, n);
    }
}

fn derived_system(b: &Expr) -> Option<OdeSystem> {
    let d = differentiate(b).ok()?;
    let rhs = canon::simplify(&d.derivative).unwrap_or(d.derivative);
    OdeSystem::new(vec![("x".into(), rhs)]).ok()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn certified_solutions_pass_a_numeric_cross_check(
        b in time_body(3),
        vs in prop::collection::vec(point(), 100),
    ) {
        let Some(sys) = derived_system(&b) else { return Ok(()) };
        let sol = Solution::new([("x".to_string(), b.clone())]);
        let cert = certify(&sys, &sol, &[]).unwrap();
        if cert.status != Status::Certified {
            return Ok(());
        }
        let rhs = sys.rhs("x").unwrap();
        for v in &vs {
            match soundness_check(&b, v, &h_default()) {
                Check::Disagree(msg) => prop_assert!(false, "{}", msg),
                Check::Skipped => continue,
                Check::Agree => {}
            }
            if let (Some(fd), Some(r)) = (central_difference(&b, v, &h_default()), eval_at(rhs, v)) {
                if magnitude_ok(r) {
                    prop_assert!(close(fd, r, 1e-4), "x = {} at {:?}: {} vs {}", b, named(v), fd, r);
                }
            }
        }
    }

    #[test]
    fn certification_decomposes_by_component(b1 in time_body(2), b2 in time_body(2), couple in any::<bool>()) {
        let (Ok(d1), Ok(d2)) = (differentiate(&b1), differentiate(&b2)) else { return Ok(()) };
        // Optionally express the second rhs through the first state variable.
        let rhs2 = if couple {
            Expr::add(Expr::sub(d2.derivative, b1.clone()), Expr::state("x"))
        } else {
            d2.derivative
        };
        let sys = OdeSystem::new(vec![("x".into(), d1.derivative), ("y".into(), rhs2)]).unwrap();
        let sol = Solution::new([("x".to_string(), b1), ("y".to_string(), b2)]);
        let whole = certify(&sys, &sol, &[]).unwrap();
        let parts: Vec<Status> = ["x", "y"]
            .iter()
            .map(|v| {
                let (s, p) = project(&sys, &sol, v).unwrap();
                certify(&s, &p, &[]).unwrap().status
            })
            .collect();
        let all = parts.iter().all(|s| *s == Status::Certified) && whole.range == RangeVerdict::Holds;
        prop_assert_eq!(whole.status == Status::Certified, all);
    }

    #[test]
    fn assumptions_never_turn_certified_into_failed(b in time_body(3), which in 0usize..4) {
        let Some(sys) = derived_system(&b) else { return Ok(()) };
        let sol = Solution::new([("x".to_string(), b)]);
        let before = certify(&sys, &sol, &[]).unwrap().status;
        let text = ["a > 0", "x0 > 0", "a != 0", "1 - a > 0"][which];
        let ctx = ParseContext::from_symbols(&[Symbol::Param("a".into()), Symbol::Init("x0".into())]);
        let assumption = Assumption::parse(text, &ctx).unwrap();
        let after = certify(&sys, &sol, &[assumption]).unwrap().status;
        if before != Status::Failed {
            prop_assert_ne!(after, Status::Failed);
        }
    }

    #[test]
    fn refuter_is_deterministic_under_a_seed(a in body(3), b in body(3), seed in any::<u64>()) {
        let r = Refuter::new(seed, 50);
        let first = format!("{:?}", r.refute_equality(&a, &b, &[]));
        let second = format!("{:?}", r.refute_equality(&a, &b, &[]));
        prop_assert_eq!(first, second);
    }

    #[test]
    fn refuter_never_contradicts_equal(a in body(3), b in body(3)) {
        let Ok(true) = canon::equal(&a, &b) else { return Ok(()) };
        let r = Refuter::new(1, 200).refute_equality(&a, &b, &[]);
        if let Ok(r) = r {
            prop_assert!(!r.is_refuted(), "{} = {}: {}", a, b, r);
        }
    }
}

#[test]
fn condition_margins_are_applied() {
    let v: Valuation = BTreeMap::from([(Symbol::Time, Rational::new(1.into(), 10_000.into()))]);
    assert!(!holds_with_margin(&Condition::positive(Expr::Time), &v));
    let v: Valuation = BTreeMap::from([(Symbol::Time, rat(1, 100))]);
    assert!(holds_with_margin(&Condition::positive(Expr::Time), &v));
}
