mod common;

use proptest::prelude::*;
use sdlyap_core::expr::{Env, Func, Var};
use sdlyap_core::Expr;

fn eval_x(e: &Expr, x: &[f64]) -> f64 {
    e.eval(&Env::state(x)).unwrap()
}

#[test]
fn parses_closed_loop_component() {
    let e = Expr::parse("-2*x[1] - d[1]*x[1]^3 + x[2]").unwrap();
    let vars: Vec<String> = e.variables().iter().map(|v| v.to_string()).collect();
    assert_eq!(vars, ["d[1]", "x[1]", "x[2]"]);
    let env = Env { x: &[2.0, 1.0], d: &[0.5], ..Env::default() };
    assert_eq!(e.eval(&env).unwrap(), -4.0 - 4.0 + 1.0);
}

#[test]
fn parses_zero_literal() {
    assert_eq!(Expr::parse("0").unwrap(), Expr::Num(0.0));
}

#[test]
fn nested_min_max() {
    let e = Expr::parse("min(x[1], max(0, v[1]))").unwrap();
    assert!(matches!(e, Expr::Call(Func::Min, _)));
    let env = Env { x: &[2.0], v: &[-1.0], ..Env::default() };
    assert_eq!(e.eval(&env).unwrap(), 0.0);
}

#[test]
fn evaluates_quadratic() {
    assert_eq!(eval_x(&Expr::parse("x[1]^2/2").unwrap(), &[3.0]), 4.5);
}

#[test]
fn evaluates_held_component() {
    let e = Expr::parse("d[1]*x[2]^2 - x[2]^3 - 2*xs[2] + v[1]").unwrap();
    let env = Env { x: &[0.0, 1.0], xs: &[0.0, 1.0], d: &[1.0], v: &[0.0], ..Env::default() };
    assert_eq!(e.eval(&env).unwrap(), -2.0);
}

#[test]
fn sqrt_of_negative_is_domain_error() {
    assert!(Expr::parse("sqrt(x[1])").unwrap().eval(&Env::state(&[-1.0])).is_err());
}

#[test]
fn unbound_variable_is_error() {
    assert!(Expr::parse("x[3]").unwrap().eval(&Env::state(&[1.0])).is_err());
}

#[test]
fn syntax_errors_carry_offsets() {
    let err = Expr::parse("x[1] + * 2").unwrap_err();
    assert_eq!(err.offset, 7);
    assert!(Expr::parse("foo(x[1])").is_err());
    assert!(Expr::parse("x[").is_err());
    assert!(Expr::parse("x[1]^x[2]").is_err());
}

#[test]
fn precedence_and_associativity() {
    let x = [2.0];
    assert_eq!(eval_x(&Expr::parse("-x[1]^2").unwrap(), &x), -4.0);
    assert_eq!(eval_x(&Expr::parse("2^3^2").unwrap(), &x), 512.0);
    assert_eq!(eval_x(&Expr::parse("8/4/2").unwrap(), &x), 1.0);
    assert_eq!(eval_x(&Expr::parse("8 - 4 - 2").unwrap(), &x), 2.0);
    assert_eq!(eval_x(&Expr::parse(" 1+2 * 3 ").unwrap(), &x), 7.0);
}

#[test]
fn derivative_of_quadratic() {
    let d = Expr::parse("x[1]^2/2").unwrap().differentiate(&Var::indexed("x", 1)).unwrap();
    for x in [-2.0, 0.0, 3.5] {
        assert_eq!(eval_x(&d, &[x]), x);
    }
}

#[test]
fn chain_rule() {
    let e = Expr::parse("(x[2]+0.5*x[1])^2/2").unwrap();
    let d = e.differentiate(&Var::indexed("x", 2)).unwrap();
    for x in [[1.0, 2.0], [-3.0, 0.25]] {
        assert!((eval_x(&d, &x) - (x[1] + 0.5 * x[0])).abs() < 1e-12);
    }
}

#[test]
fn nonsmooth_primitives_are_rejected() {
    let x1 = Var::indexed("x", 1);
    for text in ["abs(x[1])", "sign(x[1])", "min(x[1], 0)", "max(1, x[1]^2)"] {
        assert!(Expr::parse(text).unwrap().differentiate(&x1).is_err(), "{text}");
    }
    let d = Expr::parse("abs(x[2]) + x[1]").unwrap().differentiate(&x1).unwrap();
    assert_eq!(eval_x(&d, &[0.3, -1.0]), 1.0);
}

#[test]
fn corpus_round_trips() {
    assert!(common::CORPUS.len() >= 30);
    for text in common::CORPUS {
        let e = Expr::parse(text).unwrap();
        assert_eq!(Expr::parse(&e.to_string()).unwrap(), e, "{text} printed as {e}");
    }
}

fn arb_expr() -> impl Strategy<Value = Expr> {
    let leaf = prop_oneof![
        (-100i32..100).prop_map(|k| Expr::Num(k as f64 / 8.0)),
        (1usize..3).prop_map(|i| Expr::var("x", i)),
        (1usize..2).prop_map(|i| Expr::var("d", i)),
        (1usize..2).prop_map(|i| Expr::var("xs", i)),
    ];
    leaf.prop_recursive(4, 32, 3, |inner| {
        prop_oneof![
            inner.clone().prop_map(|a| Expr::Neg(Box::new(a))),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::Add(Box::new(a), Box::new(b))),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::Sub(Box::new(a), Box::new(b))),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::Mul(Box::new(a), Box::new(b))),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::Div(Box::new(a), Box::new(b))),
            (inner.clone(), prop_oneof![Just(2.0), Just(3.0), Just(-1.0), Just(0.5)]).prop_map(|(a, p)| Expr::Pow(Box::new(a), p)),
            (inner.clone(), prop_oneof![Just(Func::Sin), Just(Func::Exp), Just(Func::Tanh), Just(Func::Abs)]).prop_map(|(a, f)| Expr::Call(f, vec![a])),
            (inner.clone(), inner).prop_map(|(a, b)| Expr::Call(Func::Max, vec![a, b])),
        ]
    })
}

proptest! {
    #[test]
    fn printed_trees_reparse_identically(e in arb_expr()) {
        let again = Expr::parse(&e.to_string()).unwrap();
        prop_assert_eq!(again, e);
    }

    #[test]
    fn corpus_derivatives_match_central_differences(k in 0usize..30, i in 1usize..3, a in 0.3f64..2.0, b in 0.3f64..2.0) {
        let e = Expr::parse(common::CORPUS[k]).unwrap();
        let de = e.differentiate(&Var::indexed("x", i)).unwrap();
        let x = [a, b];
        let h = 1e-5;
        let (mut lo, mut hi) = (x, x);
        lo[i - 1] -= h;
        hi[i - 1] += h;
        let fd = (eval_x(&e, &hi) - eval_x(&e, &lo)) / (2.0 * h);
        let sym = eval_x(&de, &x);
        prop_assert!((sym - fd).abs() <= 1e-6 * sym.abs().max(1.0), "{} at {:?}: {} vs {}", common::CORPUS[k], x, sym, fd);
    }

    #[test]
    fn evaluation_is_pure(e in arb_expr(), a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let env = Env { x: &[a, b], xs: &[b], d: &[a], ..Env::default() };
        let first = e.eval(&env).map(f64::to_bits).ok();
        let second = e.eval(&env).map(f64::to_bits).ok();
        prop_assert_eq!(first, second);
    }
}
