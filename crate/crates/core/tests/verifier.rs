use proptest::prelude::*;
use rand::Rng;
use sdlyap_core::builtins::{ex41_model, ex41_vector_certificate, BuiltinParams};
use sdlyap_core::rng::stream;
use sdlyap_core::verify::{analytic_b_check, b_bound_seeded, check_hypotheses, decrease_check, sandwich_check, HypothesisCandidates, LyapunovCertificate, StateBound};
use sdlyap_core::{ComparisonFunction, Expr, FnClass, Region, SampleBudget, SystemModel};

fn ex41(r: f64) -> SystemModel {
    ex41_model(&BuiltinParams { r, ..BuiltinParams::default() }).unwrap()
}

fn cf(text: &str, class: FnClass) -> ComparisonFunction {
    ComparisonFunction::parse(text, class).unwrap()
}

fn scalar_model() -> SystemModel {
    SystemModel::parse(1, &["-2*xs[1] + v[1]"], &["x[1]"], "0.1", 0.1, vec![], vec![sdlyap_core::Interval::unbounded()]).unwrap()
}

fn scalar_certificate() -> LyapunovCertificate {
    LyapunovCertificate::new(
        1,
        vec![Expr::parse("x[1]^2/2").unwrap()],
        vec![cf("s", FnClass::PositiveDefinite)],
        cf("s/2", FnClass::N),
        cf("s^2", FnClass::N),
        cf("s^2/2", FnClass::KInfinity),
        cf("s^2/2", FnClass::KInfinity),
        vec![Expr::parse("x[1]").unwrap()],
    )
    .unwrap()
}

#[test]
fn vector_b_is_below_the_analytic_bound() {
    let c = 1.1;
    let est = b_bound_seeded(&ex41_vector_certificate(c).unwrap(), 1, &[0.0, 1.0], &ex41(0.11), 4000, 3, 0).unwrap();
    let bound = c * c + c * c * c + 2.0 * c + 0.5;
    assert!((bound - 5.241).abs() < 1e-12);
    assert!(est.value <= bound, "{} > {bound}", est.value);
    assert!(est.value > 0.5 * bound);
    assert!(est.accepted > 0 && est.samples >= est.accepted);
}

#[test]
fn b_vanishes_at_the_origin() {
    let cert = ex41_vector_certificate(1.1).unwrap();
    for i in 0..2 {
        assert_eq!(b_bound_seeded(&cert, i, &[0.0, 0.0], &ex41(0.11), 500, 1, 0).unwrap().value, 0.0);
    }
}

#[test]
fn scalar_b_matches_brute_force() {
    // constraint set at x = 1: x0²/4 ≤ 1/2 and v² ≤ 1/2
    let mut rng = stream(2024, 0xB0, 0);
    let (x0_max, v_max) = (2f64.sqrt(), 0.5f64.sqrt());
    let mut brute = 0.0f64;
    for _ in 0..1_000_000 {
        let x0: f64 = rng.gen_range(-x0_max..=x0_max);
        let v: f64 = rng.gen_range(-v_max..=v_max);
        if x0 * x0 / 4.0 <= 0.5 && v * v <= 0.5 {
            brute = brute.max((-2.0 * x0 + v).abs());
        }
    }
    let est = b_bound_seeded(&scalar_certificate(), 0, &[1.0], &scalar_model(), 4000, 5, 0).unwrap();
    assert!((est.value - brute).abs() <= 0.05 * brute, "{} vs {brute}", est.value);
}

#[test]
fn b_is_nondecreasing_in_the_level() {
    let cert = scalar_certificate();
    let model = scalar_model();
    let mut prev = 0.0;
    for x in [0.25, 0.5, 1.0, 2.0, 4.0] {
        let b = b_bound_seeded(&cert, 0, &[x], &model, 1000, 8, 0).unwrap().value;
        assert!(b >= prev, "b({x}) = {b} < {prev}");
        prev = b;
    }
}

#[test]
fn vector_condition_holds_below_the_bound() {
    let reports = decrease_check(&ex41_vector_certificate(1.1).unwrap(), &ex41(0.11), &Region::cube(2, 5.0), 0.11, &SampleBudget::new(15, 300, 1)).unwrap();
    assert_eq!(reports.len(), 2);
    for r in &reports {
        assert!(r.passed(), "{}: {}", r.condition, r.worst_margin);
        assert!(r.worst_margin >= -1e-9);
    }
}

#[test]
fn large_period_is_falsified_for_the_second_function_only() {
    let model = ex41(1.0);
    let reports = decrease_check(&ex41_vector_certificate(1.1).unwrap(), &model, &Region::cube(2, 5.0), 1.0, &SampleBudget::new(15, 300, 2)).unwrap();
    assert!(reports[0].passed(), "i = 1 should hold at any r");
    assert!(!reports[1].passed());
    let w = reports[1].witness.as_ref().unwrap();
    assert!(reports[1].worst_margin < 0.0);
    assert_eq!(w.x.len(), 2);
}

#[test]
fn continuous_time_condition_holds_for_admissible_c() {
    for c in [1.05, 1.3, 1.6, 1.9] {
        let reports = decrease_check(&ex41_vector_certificate(c).unwrap(), &ex41(0.05), &Region::cube(2, 4.0), 0.0, &SampleBudget::new(11, 200, 3)).unwrap();
        assert!(reports.iter().all(|r| r.passed()), "c = {c}");
    }
}

#[test]
fn decrease_reports_are_deterministic() {
    let run = || decrease_check(&ex41_vector_certificate(1.1).unwrap(), &ex41(0.3), &Region::cube(2, 3.0), 0.3, &SampleBudget::new(9, 100, 11)).unwrap();
    assert_eq!(run(), run());
}

#[test]
fn sandwich_holds_for_the_vector_certificate() {
    let region = Region::cube(2, 5.0);
    let budget = SampleBudget::new(41, 10, 1);
    let report = sandwich_check(&ex41_vector_certificate(1.1).unwrap(), &ex41(0.11), &region, &budget).unwrap();
    assert!(report.passed());
    assert!(report.worst_margin >= -1e-9);
}

#[test]
fn sandwich_fails_with_a_too_large_lower_bound() {
    let mut cert = ex41_vector_certificate(1.1).unwrap();
    cert.a1 = cf("s^2", FnClass::KInfinity);
    let report = sandwich_check(&cert, &ex41(0.11), &Region::cube(2, 5.0), &SampleBudget::new(21, 10, 1)).unwrap();
    assert!(!report.passed());
    let w = report.witness.unwrap();
    let x2 = w.x[0] * w.x[0] + w.x[1] * w.x[1];
    let vmax = (w.x[0] * w.x[0]).max(w.x[1] * w.x[1]) / 2.0;
    assert!(vmax < x2);
}

#[test]
fn analytic_b_dominates_numeric_b() {
    let reports = analytic_b_check(&ex41_vector_certificate(1.1).unwrap(), &ex41(0.11), &Region::cube(2, 3.0), &SampleBudget::new(7, 300, 4)).unwrap();
    assert!(reports.iter().all(|r| r.passed()));
}

#[test]
fn hypotheses_on_the_planar_loop() {
    let model = ex41(0.11);
    let candidates = HypothesisCandidates { growth: None, state_bound: Some(StateBound { r: 0.0, p: cf("s", FnClass::KInfinity) }) };
    let reports = check_hypotheses(&model, &Region::cube(2, 5.0), &SampleBudget::new(11, 500, 6), &candidates).unwrap();
    let get = |h: &str| reports.iter().find(|r| r.hypothesis == h).unwrap();
    assert!(get("H3").report.passed());
    assert_eq!(get("H3").mode, "candidate");
    assert!(get("H4").report.passed());
    assert_eq!(get("H2").mode, "envelope");

    let local = check_hypotheses(&model, &Region::cube(2, 1.0), &SampleBudget::new(11, 2000, 6), &HypothesisCandidates::default()).unwrap();
    let l = local.iter().find(|r| r.hypothesis == "H1").unwrap().estimate.unwrap();
    assert!(l.is_finite() && l <= 10.0, "{l}");
}

#[test]
fn sampling_function_above_r_fails_h4() {
    let model = ex41(0.11).with_sampling(Expr::parse("0.05 + 0.1*x[1]^2").unwrap(), 0.11).unwrap();
    let reports = check_hypotheses(&model, &Region::cube(2, 2.0), &SampleBudget::new(11, 100, 6), &HypothesisCandidates::default()).unwrap();
    assert!(!reports.iter().find(|r| r.hypothesis == "H4").unwrap().report.passed());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn b_sets_grow_with_the_period(x1 in -3.0f64..3.0, x2 in -3.0f64..3.0, y1 in -3.0f64..3.0, y2 in -3.0f64..3.0, h1 in 0.0f64..0.5, dh in 0.0f64..0.5) {
        let cert = ex41_vector_certificate(1.1).unwrap();
        let model = ex41(1.0);
        let h2 = h1 + dh;
        for i in 0..2 {
            let b = b_bound_seeded(&cert, i, &[x1, x2], &model, 100, 1, 0).unwrap().value;
            let g = |z: &[f64]| cert.g[i].eval(&sdlyap_core::expr::Env::state(z)).unwrap();
            let gap = (g(&[y1, y2]) - g(&[x1, x2])).abs();
            if gap <= h1 * b {
                prop_assert!(gap <= h2 * b);
            }
        }
    }
}
