//! Maximum allowable sampling periods: closed forms for the two
//! certificates of the planar example and an empirical bisection over the
//! sampled decrease check.

use serde::Serialize;

use crate::model::{Region, SystemModel};
use crate::report::SampleBudget;
use crate::verify::{decrease_check, LyapunovCertificate};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum MaspMethod {
    ClosedFormSingle,
    ClosedFormVector,
    Bisection,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum MaspStatus {
    Success,
    Infeasible,
}

/// One constraint `r < bound` (open) or `r ≤ bound` (closed).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Constraint {
    pub name: String,
    pub bound: f64,
    pub open: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MASPResult {
    pub r_star: f64,
    pub method: MaspMethod,
    pub status: MaspStatus,
    /// The supremum is not attained (a strict inequality is active).
    pub open_endpoint: bool,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub constraints: Vec<Constraint>,
    /// Worst margins per condition at the returned `r_star` (bisection).
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub margins: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bracket: Option<[f64; 2]>,
    /// Bisection iterations, excluding the two bracket checks.
    pub calls: usize,
    /// Sampling periods that passed above a period that failed.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub non_monotone: Vec<f64>,
    #[serde(skip_serializing_if = "String::is_empty")]
    pub label: String,
}

fn closed_form(method: MaspMethod, constraints: Vec<Constraint>) -> MASPResult {
    let r_star = constraints.iter().map(|c| c.bound).fold(f64::INFINITY, f64::min);
    let open_endpoint = constraints.iter().any(|c| c.open && c.bound == r_star);
    let status = if r_star > 0.0 { MaspStatus::Success } else { MaspStatus::Infeasible };
    MASPResult {
        r_star: r_star.max(0.0),
        method,
        status,
        open_endpoint,
        constraints,
        margins: Vec::new(),
        bracket: None,
        calls: 0,
        non_monotone: Vec::new(),
        label: String::new(),
    }
}

/// Bound for the single quadratic Lyapunov function:
/// `r < 7/(40c²+8)` and `r ≤ c⁻³·min{1/11, δ/5}`, infeasible when `δ = 0`.
pub fn masp_example41_single(c: f64, delta: f64) -> Result<MASPResult> {
    if !(c > 1.0 && c.is_finite()) {
        return Err(Error::Input(format!("c must exceed 1, got {c}")));
    }
    if !(delta >= 0.0 && delta.is_finite()) {
        return Err(Error::Input(format!("delta must be nonnegative, got {delta}")));
    }
    Ok(closed_form(
        MaspMethod::ClosedFormSingle,
        vec![
            Constraint { name: "7/(40c^2+8)".into(), bound: 7.0 / (40.0 * c * c + 8.0), open: true },
            Constraint { name: "c^-3*min(1/11, delta/5)".into(), bound: (1.0 / 11.0f64).min(delta / 5.0) / (c * c * c), open: false },
        ],
    ))
}

/// Bound for the vector Lyapunov function `(x₁²/2, x₂²/2)`:
/// `r < 1/(5c²+2)` and `r ≤ 1/(6c³)`, for `c ∈ (1, 2)`.
pub fn masp_example41_vector(c: f64) -> Result<MASPResult> {
    if !(c > 1.0 && c < 2.0) {
        return Err(Error::Input(format!("c must lie in (1, 2), got {c}")));
    }
    Ok(closed_form(
        MaspMethod::ClosedFormVector,
        vec![
            Constraint { name: "1/(5c^2+2)".into(), bound: 1.0 / (5.0 * c * c + 2.0), open: true },
            Constraint { name: "1/(6c^3)".into(), bound: 1.0 / (6.0 * c * c * c), open: false },
        ],
    ))
}

/// Outcome of one sampled decrease check at a sampling period.
struct Probe {
    passed: bool,
    margins: Vec<f64>,
}

fn probe(cert: &LyapunovCertificate, model: &SystemModel, region: &Region, budget: &SampleBudget, r: f64) -> Result<Probe> {
    let sampled = model.with_constant_sampling(r)?;
    let reports = decrease_check(cert, &sampled, region, r, budget)?;
    Ok(Probe { passed: reports.iter().all(|rep| rep.passed()), margins: reports.iter().map(|rep| rep.worst_margin).collect() })
}

/// Number of extra probes above the final bracket used to detect
/// non-monotone pass/fail behaviour.
pub const MONOTONICITY_PROBES: usize = 2;

/// Empirical MASP under the budget: bisection on the pass/fail boundary of
/// the sampled decrease check with constant sampling `h ≡ r`.
///
/// The result is not a guarantee; it depends on the budget and seed.
pub fn masp_bisection(cert: &LyapunovCertificate, model: &SystemModel, region: &Region, budget: &SampleBudget, r_lo: f64, r_hi: f64, tol: f64) -> Result<MASPResult> {
    if !(r_lo > 0.0 && r_lo < r_hi && r_hi.is_finite()) {
        return Err(Error::Input(format!("bracket [{r_lo}, {r_hi}] must satisfy 0 < lo < hi")));
    }
    if !(tol > 0.0 && tol < 1.0) {
        return Err(Error::Input(format!("tolerance must lie in (0, 1), got {tol}")));
    }
    let low = probe(cert, model, region, budget, r_lo)?;
    if !low.passed {
        return Err(Error::Bracket(format!("decrease check fails at the lower end r = {r_lo}")));
    }
    if probe(cert, model, region, budget, r_hi)?.passed {
        return Err(Error::Bracket(format!("decrease check passes at the upper end r = {r_hi}")));
    }
    let (mut lo, mut hi) = (r_lo, r_hi);
    let mut margins = low.margins;
    let mut calls = 0;
    while hi - lo > tol * r_hi {
        let mid = 0.5 * (lo + hi);
        let p = probe(cert, model, region, budget, mid)?;
        calls += 1;
        if p.passed {
            lo = mid;
            margins = p.margins;
        } else {
            hi = mid;
        }
    }
    let mut non_monotone = Vec::new();
    for k in 1..=MONOTONICITY_PROBES {
        let r = hi + (r_hi - hi) * k as f64 / (MONOTONICITY_PROBES + 1) as f64;
        if r < r_hi && probe(cert, model, region, budget, r)?.passed {
            non_monotone.push(r);
        }
    }
    Ok(MASPResult {
        r_star: lo,
        method: MaspMethod::Bisection,
        status: MaspStatus::Success,
        open_endpoint: false,
        constraints: Vec::new(),
        margins,
        bracket: Some([lo, hi]),
        calls,
        non_monotone,
        label: "empirical MASP under budget".into(),
    })
}

/// `⌈log₂((r_hi − r_lo)/(tol·r_hi))⌉ + 1`.
pub fn bisection_call_bound(r_lo: f64, r_hi: f64, tol: f64) -> usize {
    (((r_hi - r_lo) / (tol * r_hi)).log2().ceil().max(0.0) as usize) + 1
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vector_closed_form() {
        let r = masp_example41_vector(1.1).unwrap();
        assert!((r.r_star - 1.0 / 8.05).abs() < 1e-12);
        assert!(r.open_endpoint);
        assert!((masp_example41_vector(1.9).unwrap().r_star - 1.0 / 41.154).abs() < 1e-12);
        assert!(masp_example41_vector(2.0).is_err());
        assert!(masp_example41_vector(1.0).is_err());
    }

    #[test]
    fn single_closed_form() {
        let r = masp_example41_single(1.1, 1.0).unwrap();
        assert!((r.r_star - 1.0 / 14.641).abs() < 1e-12);
        assert!(!r.open_endpoint);
        assert_eq!(masp_example41_single(1.1, 0.0).unwrap().status, MaspStatus::Infeasible);
        assert!(masp_example41_single(1.1, -1.0).is_err());
        let near_one = masp_example41_single(1.0 + 1e-12, 100.0).unwrap();
        assert!((near_one.r_star - 1.0 / 11.0).abs() < 1e-9);
    }

    #[test]
    fn call_bound() {
        assert_eq!(bisection_call_bound(0.01, 1.0, 1e-2), 8);
    }
}
