use proptest::prelude::*;
use rand::Rng;
use sdlyap_core::comparison::{check_strict_contraction, compose_gain, probe_grid, validate_comparison_fn, GridSpec};
use sdlyap_core::rng::stream;
use sdlyap_core::{ComparisonFunction, FnClass, Signal};

fn cf(text: &str, class: FnClass) -> ComparisonFunction {
    ComparisonFunction::parse(text, class).unwrap()
}

#[test]
fn quadratic_zeta_is_class_n() {
    let report = validate_comparison_fn(&cf("2*s^2", FnClass::N), 201).unwrap();
    assert!(report.passed());
    assert_eq!(report.grid.points, 201);
}

#[test]
fn identity_is_positive_definite_but_not_a_contraction() {
    let a = cf("s", FnClass::PositiveDefinite);
    assert!(validate_comparison_fn(&a, 201).unwrap().passed());
    let contraction = check_strict_contraction(&a, GridSpec::new(201)).unwrap();
    assert!(!contraction.passed);
    assert!(cf("s/2", FnClass::PositiveDefinite).eval(1.0).unwrap() < 1.0);
    assert!(check_strict_contraction(&cf("s/2", FnClass::PositiveDefinite), GridSpec::new(201)).unwrap().passed);
}

#[test]
fn negative_function_fails_class_k_with_witness() {
    let report = validate_comparison_fn(&cf("-s", FnClass::K), 11).unwrap();
    assert!(!report.passed());
    let worst = report.check("strictly-increasing").unwrap().worst.as_ref().unwrap();
    assert_eq!(worst.s, 1.0);
    assert!(!report.check("nonnegative").unwrap().passed);
}

#[test]
fn other_variables_are_rejected() {
    assert!(ComparisonFunction::parse("x[1]^2", FnClass::K).is_err());
    assert!(ComparisonFunction::parse("s + t", FnClass::K).is_err());
    assert!(validate_comparison_fn(&cf("s", FnClass::K), 1).is_err());
}

#[test]
fn vector_certificate_gain() {
    let g = compose_gain(&cf("s^2/4", FnClass::KInfinity), &cf("2*s^2", FnClass::N)).unwrap();
    assert!((g.eval(1.0).unwrap() - 8f64.sqrt()).abs() < 1e-9);
    assert!((g.eval(3.0).unwrap() - 3.0 * 8f64.sqrt()).abs() < 1e-9);
}

#[test]
fn identity_gain() {
    let g = compose_gain(&cf("s", FnClass::KInfinity), &cf("s", FnClass::N)).unwrap();
    assert_eq!(g.eval(0.0).unwrap(), 0.0);
    assert!((g.eval(0.7).unwrap() - 0.7).abs() < 1e-11);
}

#[test]
fn single_certificate_gain() {
    let g = compose_gain(&cf("s^2/2", FnClass::KInfinity), &cf("2*s^2", FnClass::N)).unwrap();
    assert!((g.eval(1.0).unwrap() - 2.0).abs() < 1e-9);
}

#[test]
fn flat_a1_cannot_be_inverted() {
    assert!(compose_gain(&cf("min(s, 1)", FnClass::K), &cf("s", FnClass::N)).is_err());
}

#[test]
fn inverse_brackets_large_values() {
    let a = cf("s^3", FnClass::KInfinity);
    let y = 1e6;
    assert!((a.inverse(y).unwrap() - 100.0).abs() < 1e-9);
}

proptest! {
    #[test]
    fn composed_gain_inverts_a1(ka in 0.1f64..4.0, kz in 0.1f64..4.0, p in 1u32..4) {
        let a1 = cf(&format!("{ka}*s^{p}"), FnClass::KInfinity);
        let zeta = cf(&format!("{kz}*s^2"), FnClass::N);
        let g = compose_gain(&a1, &zeta).unwrap();
        for s in probe_grid() {
            let z = zeta.eval(s).unwrap();
            let back = a1.eval(g.eval(s).unwrap()).unwrap();
            prop_assert!((back - z).abs() <= 1e-9 * (1.0 + z), "s = {}: {} vs {}", s, back, z);
        }
    }

    #[test]
    fn passing_reports_hold_at_every_grid_point(k in 0.1f64..5.0, p in 0.5f64..3.0) {
        let f = cf(&format!("{k}*s^{p}"), FnClass::KInfinity);
        let report = validate_comparison_fn(&f, 101).unwrap();
        prop_assert!(report.passed());
        let s = report.grid.samples();
        let values: Vec<f64> = s.iter().map(|&si| f.eval(si).unwrap()).collect();
        prop_assert_eq!(values[0], 0.0);
        prop_assert!(values.windows(2).all(|w| w[1] > w[0]));
    }
}

#[test]
fn constant_signal() {
    assert_eq!(Signal::constant(vec![0.5]).eval(3.7).unwrap(), [0.5]);
}

#[test]
fn piecewise_signal_is_right_continuous() {
    let s = Signal::piecewise(vec![0.0, 1.0, 2.0], vec![vec![1.0], vec![-1.0], vec![1.0]]).unwrap();
    assert_eq!(s.eval(1.0).unwrap(), [-1.0]);
    assert_eq!(s.eval(0.999).unwrap(), [1.0]);
    assert_eq!(s.eval(2.0).unwrap(), [1.0]);
    assert_eq!(s.eval(50.0).unwrap(), [1.0]);
    assert_eq!(s.sup_norm(0.0, 10.0).unwrap(), 1.0);
}

#[test]
fn expression_signal() {
    let s = Signal::parse_expression(&["sin(t)"]).unwrap();
    assert_eq!(s.eval(0.0).unwrap(), [0.0]);
    assert!(Signal::parse_expression(&["x[1]"]).is_err());
}

#[test]
fn malformed_piecewise_is_rejected() {
    assert!(Signal::piecewise(vec![0.0, 0.0], vec![vec![1.0], vec![2.0]]).is_err());
    assert!(Signal::piecewise(vec![0.0, 1.0], vec![vec![1.0]]).is_err());
    assert!(Signal::piecewise(vec![0.0, 1.0], vec![vec![1.0], vec![1.0, 2.0]]).is_err());
}

#[test]
fn shifted_signal_matches_original() {
    let s = Signal::piecewise(vec![0.0, 1.0, 2.5], vec![vec![1.0], vec![-1.0], vec![3.0]]).unwrap();
    let theta = 0.7;
    let shifted = s.shifted(theta).unwrap();
    for t in [0.0, 0.2, 0.35, 1.0, 1.75, 1.9, 4.0] {
        assert_eq!(shifted.eval(t).unwrap(), s.eval(t + theta).unwrap());
    }
}

proptest! {
    #[test]
    fn signal_evaluation_is_bit_identical(seed in 0u64..1000, t in 0.0f64..20.0) {
        let mut rng = stream(seed, 1, 0);
        let s = Signal::random_piecewise(20.0, 0.3, &mut rng, |r| vec![r.gen_range(-1.0..1.0), r.gen_range(-2.0..2.0)]).unwrap();
        let mut rng2 = stream(seed, 1, 0);
        let s2 = Signal::random_piecewise(20.0, 0.3, &mut rng2, |r| vec![r.gen_range(-1.0..1.0), r.gen_range(-2.0..2.0)]).unwrap();
        let a: Vec<u64> = s.eval(t).unwrap().into_iter().map(f64::to_bits).collect();
        let b: Vec<u64> = s.eval(t).unwrap().into_iter().map(f64::to_bits).collect();
        let c: Vec<u64> = s2.eval(t).unwrap().into_iter().map(f64::to_bits).collect();
        prop_assert_eq!(&a, &b);
        prop_assert_eq!(&a, &c);
    }
}
