use sdlyap_core::builtins::{ex41_model, ex41_vector_certificate, scalar_hold_certificate, scalar_hold_masp, scalar_hold_model, BuiltinParams};
use sdlyap_core::masp::{bisection_call_bound, masp_bisection, masp_example41_single, masp_example41_vector, MaspMethod, MaspStatus};
use sdlyap_core::sim::{simulate, IntegratorConfig, Inputs};
use sdlyap_core::{Error, Region, SampleBudget};

fn single_oracle(c: f64, delta: f64) -> f64 {
    (7.0 / (40.0 * c * c + 8.0)).min((1.0 / 11.0f64).min(delta / 5.0) / (c * c * c))
}

fn vector_oracle(c: f64) -> f64 {
    (1.0 / (5.0 * c * c + 2.0)).min(1.0 / (6.0 * c * c * c))
}

#[test]
fn single_closed_form() {
    let r = masp_example41_single(1.1, 1.0).unwrap();
    assert_eq!(r.method, MaspMethod::ClosedFormSingle);
    assert_eq!(r.status, MaspStatus::Success);
    assert!((r.r_star - 0.0683013).abs() < 1e-6);
    assert!((r.r_star - single_oracle(1.1, 1.0)).abs() < 1e-12);
    assert!(r.open_endpoint || r.constraints.iter().any(|c| c.open));
}

#[test]
fn single_needs_positive_delta() {
    assert_eq!(masp_example41_single(1.1, 0.0).unwrap().status, MaspStatus::Infeasible);
    assert!(masp_example41_single(1.1, -0.1).is_err());
    assert!(masp_example41_single(0.9, 1.0).is_err());
}

#[test]
fn single_limit_near_one() {
    let r = masp_example41_single(1.0 + 1e-9, 100.0).unwrap();
    assert!((r.r_star - 1.0 / 11.0).abs() < 1e-8);
}

#[test]
fn vector_closed_form() {
    let r = masp_example41_vector(1.1).unwrap();
    assert_eq!(r.method, MaspMethod::ClosedFormVector);
    assert!((r.r_star - 0.1242236).abs() < 1e-6);
    let high = masp_example41_vector(1.9).unwrap();
    assert!((high.r_star - 0.0242990).abs() < 1e-6);
    for c in [1.01, 1.25, 1.5, 1.75, 1.99] {
        assert!((masp_example41_vector(c).unwrap().r_star - vector_oracle(c)).abs() < 1e-12);
    }
}

#[test]
fn vector_rejects_c_outside_range() {
    assert!(masp_example41_vector(1.0).is_err());
    assert!(masp_example41_vector(2.0).is_err());
}

#[test]
fn vector_dominates_single() {
    for c in [1.05, 1.1, 1.3, 1.5, 1.9] {
        for delta in [0.05, 0.5, 1.0, 5.0] {
            let v = masp_example41_vector(c).unwrap().r_star;
            let s = masp_example41_single(c, delta).unwrap().r_star;
            assert!(v >= s, "c = {c}, delta = {delta}: {v} < {s}");
        }
    }
}

#[test]
fn bisection_does_not_undercut_the_analytic_bound() {
    let model = ex41_model(&BuiltinParams { r: 1.0, ..BuiltinParams::default() }).unwrap();
    let cert = ex41_vector_certificate(1.1).unwrap();
    let (lo, hi, tol) = (0.01, 1.0, 1e-2);
    let r = masp_bisection(&cert, &model, &Region::cube(2, 5.0), &SampleBudget::new(15, 300, 3), lo, hi, tol).unwrap();
    assert_eq!(r.method, MaspMethod::Bisection);
    assert!(r.r_star >= 0.1242 * 0.9, "{}", r.r_star);
    let [b_lo, b_hi] = r.bracket.unwrap();
    assert!(b_lo >= lo && b_hi <= hi && b_hi - b_lo <= tol * hi);
    assert!(r.calls <= bisection_call_bound(lo, hi, tol), "{} calls", r.calls);
    assert!(r.label.contains("empirical"));
}

#[test]
fn failing_lower_end_is_a_bracket_error() {
    let model = ex41_model(&BuiltinParams { r: 1.0, ..BuiltinParams::default() }).unwrap();
    let cert = ex41_vector_certificate(1.1).unwrap();
    let err = masp_bisection(&cert, &model, &Region::cube(2, 5.0), &SampleBudget::new(9, 100, 3), 0.8, 1.0, 1e-2).unwrap_err();
    assert!(matches!(err, Error::Bracket(_)));
}

#[test]
fn call_bound_formula() {
    assert_eq!(bisection_call_bound(0.01, 1.0, 1e-2), 8);
    assert_eq!(bisection_call_bound(0.5, 1.0, 0.5), 1);
}

fn decays(r: f64) -> bool {
    let model = scalar_hold_model(r).unwrap();
    let t_final = 40.0 * r;
    let traj = simulate(&model, &[1.0], &Inputs::zero(&model), &IntegratorConfig::new(t_final)).unwrap();
    traj.completed() && traj.final_state()[0].abs() < 0.5
}

#[test]
fn scalar_hold_bound_is_sound_against_simulation() {
    let (c, eps) = (1.1, 0.1);
    let analytic = scalar_hold_masp(c, eps);
    for k in 1..=20 {
        let r = 0.05 * k as f64;
        if r <= analytic {
            assert!(decays(r), "r = {r} below the analytic bound must be stable");
        }
    }
    // the simulated stability limit of x⁺ = (1 − 2r)x lies at r = 1
    assert!(decays(0.95));
    assert!(!decays(1.05));
    assert!(analytic < 1.0);

    let model = scalar_hold_model(2.0).unwrap();
    let cert = scalar_hold_certificate(c, eps).unwrap();
    let r = masp_bisection(&cert, &model, &Region::cube(1, 3.0), &SampleBudget::new(41, 400, 5), 0.05, 2.0, 1e-2).unwrap();
    assert!(r.r_star >= 0.9 * analytic && r.r_star < 1.0, "{} vs {analytic}", r.r_star);
}
