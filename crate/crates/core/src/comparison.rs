//! Comparison functions (classes K, K∞, N, positive definite, K⁺) and
//! two-argument KL functions.
//!
//! Class membership is checked by dense sampling on a grid and is a
//! falsification test, never a proof. Every report carries the grid used.

use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::expr::{Compiled, Env, EvalError, Expr, Role};
use crate::lemma::FlowSigma;

/// Absolute tolerance of numeric inversion.
pub const INVERSION_TOL: f64 = 1e-12;
/// Iteration cap of the inversion bisection.
pub const INVERSION_MAX_ITER: usize = 200;
const EXPANSION_CAP: f64 = 1e15;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ComparisonError {
    #[error("comparison function may only use the variable `s`, found `{0}`")]
    Definition(String),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("cannot invert: {0}")]
    Inversion(String),
    #[error("class violation: {0}")]
    Class(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, serde::Deserialize)]
pub enum FnClass {
    /// Continuous, zero at zero, strictly increasing.
    K,
    /// Unbounded class K.
    KInfinity,
    /// Continuous, zero at zero, nondecreasing.
    N,
    /// Zero at zero, positive elsewhere.
    PositiveDefinite,
    /// Positive everywhere (including zero).
    KPlus,
}

impl fmt::Display for FnClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FnClass::K => "K",
            FnClass::KInfinity => "K-infinity",
            FnClass::N => "N",
            FnClass::PositiveDefinite => "positive-definite",
            FnClass::KPlus => "K-plus",
        })
    }
}

#[derive(Clone, Debug)]
enum Repr {
    Expr(Expr, Compiled),
    /// `outer⁻¹ ∘ inner`, with the inverse computed numerically.
    InverseOf { outer: Box<ComparisonFunction>, inner: Box<ComparisonFunction> },
}

/// A scalar function on the nonnegative reals with a declared class.
#[derive(Clone, Debug)]
pub struct ComparisonFunction {
    repr: Repr,
    class: FnClass,
}

impl ComparisonFunction {
    pub fn new(body: Expr, class: FnClass) -> Result<Self, ComparisonError> {
        if let Some(bad) = body.variables().into_iter().find(|v| v.role() != Role::S || v.index().is_some()) {
            return Err(ComparisonError::Definition(bad.to_string()));
        }
        let compiled = Compiled::new(&body, &|v| (v.role() == Role::S).then_some(0))?;
        Ok(ComparisonFunction { repr: Repr::Expr(body, compiled), class })
    }

    /// Parses `text` as an expression in `s`.
    pub fn parse(text: &str, class: FnClass) -> Result<Self, crate::Error> {
        Ok(Self::new(Expr::parse(text)?, class)?)
    }

    pub fn class(&self) -> FnClass {
        self.class
    }

    pub fn body(&self) -> Option<&Expr> {
        match &self.repr {
            Repr::Expr(e, _) => Some(e),
            Repr::InverseOf { .. } => None,
        }
    }

    pub fn eval(&self, s: f64) -> Result<f64, ComparisonError> {
        match &self.repr {
            Repr::Expr(_, c) => Ok(c.eval(&[s])?),
            Repr::InverseOf { outer, inner } => outer.inverse(inner.eval(s)?),
        }
    }

    /// Generalized inverse `sup { s ≥ 0 : f(s) ≤ y }` of a nondecreasing
    /// function, by bisection on an expanding bracket.
    pub fn inverse(&self, y: f64) -> Result<f64, ComparisonError> {
        let f0 = self.eval(0.0)?;
        if f0 > y {
            return Err(ComparisonError::Inversion(format!("value {y} below f(0) = {f0}")));
        }
        let mut lo = 0.0;
        let mut hi = 1.0;
        while self.eval(hi)? <= y {
            lo = hi;
            hi *= 2.0;
            if hi > EXPANSION_CAP {
                return Err(ComparisonError::Inversion(format!("f stays below {y} up to s = {EXPANSION_CAP:e}")));
            }
        }
        for _ in 0..INVERSION_MAX_ITER {
            if hi - lo <= INVERSION_TOL {
                break;
            }
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.eval(mid)? <= y {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(lo)
    }
}

impl fmt::Display for ComparisonFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.repr {
            Repr::Expr(e, _) => write!(f, "{e}"),
            Repr::InverseOf { outer, inner } => write!(f, "inv({outer}) o ({inner})"),
        }
    }
}

/// Gain `γ = a1⁻¹ ∘ ζ`.
pub fn compose_gain(a1: &ComparisonFunction, zeta: &ComparisonFunction) -> Result<ComparisonFunction, ComparisonError> {
    let grid = probe_grid();
    let mut prev = a1.eval(grid[0])?;
    for &s in &grid[1..] {
        let value = a1.eval(s)?;
        if value <= prev {
            return Err(ComparisonError::Inversion(format!("a1 is not strictly increasing near s = {s}")));
        }
        prev = value;
    }
    Ok(ComparisonFunction {
        repr: Repr::InverseOf { outer: Box::new(a1.clone()), inner: Box::new(zeta.clone()) },
        class: FnClass::N,
    })
}

/// Mixed linear/geometric probe grid on `[0, 100]`.
pub fn probe_grid() -> Vec<f64> {
    let mut grid: Vec<f64> = vec![0.0];
    grid.extend((0..=40).map(|k| 10f64.powf(-4.0 + 0.1 * k as f64)));
    grid.extend((1..=99).map(|k| 0.01 + k as f64 * (100.0 - 0.01) / 99.0));
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    grid
}

/// Uniform validation grid `0 = s_0 < ... < s_max`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GridSpec {
    pub points: usize,
    pub s_max: f64,
}

impl GridSpec {
    pub fn new(points: usize) -> GridSpec {
        GridSpec { points, s_max: 10.0 }
    }

    pub fn samples(&self) -> Vec<f64> {
        let n = self.points.max(2);
        (0..n).map(|k| self.s_max * k as f64 / (n - 1) as f64).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Violation {
    pub s: f64,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PropertyCheck {
    pub property: String,
    pub passed: bool,
    /// Sample with the largest violation, if any.
    pub worst: Option<Violation>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ClassReport {
    pub class: FnClass,
    pub grid: GridSpec,
    pub checks: Vec<PropertyCheck>,
}

impl ClassReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, property: &str) -> Option<&PropertyCheck> {
        self.checks.iter().find(|c| c.property == property)
    }
}

struct Tracker {
    property: &'static str,
    worst: Option<Violation>,
    worst_amount: f64,
}

impl Tracker {
    fn new(property: &'static str) -> Tracker {
        Tracker { property, worst: None, worst_amount: 0.0 }
    }

    /// Records a violation of size `amount > 0` at `(s, value)`.
    fn record(&mut self, amount: f64, s: f64, value: f64) {
        if amount > self.worst_amount {
            self.worst_amount = amount;
            self.worst = Some(Violation { s, value });
        }
    }

    fn finish(self) -> PropertyCheck {
        PropertyCheck { property: self.property.to_string(), passed: self.worst.is_none(), worst: self.worst }
    }
}

/// Validates the declared class on the default grid `[0, 10]`.
pub fn validate_comparison_fn(f: &ComparisonFunction, grid_points: usize) -> Result<ClassReport, ComparisonError> {
    if grid_points < 2 {
        return Err(ComparisonError::Class("at least two grid points are required".into()));
    }
    validate_on(f, GridSpec::new(grid_points))
}

pub fn validate_on(f: &ComparisonFunction, grid: GridSpec) -> Result<ClassReport, ComparisonError> {
    let s = grid.samples();
    let values: Vec<f64> = s.iter().map(|&si| f.eval(si)).collect::<Result<_, _>>()?;
    let class = f.class();
    let mut checks = Vec::new();

    if class != FnClass::KPlus {
        let mut t = Tracker::new("zero-at-zero");
        t.record(values[0].abs(), s[0], values[0]);
        checks.push(t.finish());
    }

    let mut nonneg = Tracker::new("nonnegative");
    for (&si, &vi) in s.iter().zip(&values) {
        nonneg.record(-vi, si, vi);
    }
    checks.push(nonneg.finish());

    match class {
        FnClass::K | FnClass::KInfinity | FnClass::N => {
            let strict = class != FnClass::N;
            let mut t = Tracker::new(if strict { "strictly-increasing" } else { "nondecreasing" });
            for k in 1..s.len() {
                let rise = values[k] - values[k - 1];
                if rise < 0.0 || (strict && rise == 0.0) {
                    // zero rise under strictness counts as an infinitesimal violation
                    t.record((-rise).max(f64::MIN_POSITIVE), s[k], values[k]);
                }
            }
            checks.push(t.finish());
        }
        FnClass::PositiveDefinite | FnClass::KPlus => {}
    }

    if matches!(class, FnClass::K | FnClass::KInfinity | FnClass::PositiveDefinite | FnClass::KPlus) {
        let mut t = Tracker::new("positive");
        for (&si, &vi) in s.iter().zip(&values) {
            if (si > 0.0 || class == FnClass::KPlus) && vi <= 0.0 {
                t.record((-vi).max(f64::MIN_POSITIVE), si, vi);
            }
        }
        checks.push(t.finish());
    }

    Ok(ClassReport { class, grid, checks })
}

/// Checks the strict contraction `a(s) < s` at every positive grid sample.
pub fn check_strict_contraction(a: &ComparisonFunction, grid: GridSpec) -> Result<PropertyCheck, ComparisonError> {
    let mut t = Tracker::new("strict-contraction");
    for s in grid.samples().into_iter().filter(|&s| s > 0.0) {
        let value = a.eval(s)?;
        if value >= s {
            t.record((value - s).max(f64::MIN_POSITIVE), s, value);
        }
    }
    Ok(t.finish())
}

/// A KL function `σ(s, t)`.
#[derive(Clone, Debug)]
pub enum KLFunction {
    /// Closed-form expression in `s` and `t`.
    Closed(Expr),
    /// Solution map of `ẏ = −ρ(y)`.
    Flow(Arc<FlowSigma>),
    /// `C·s·exp(−λ t)`.
    Exponential { c: f64, lambda: f64 },
}

impl KLFunction {
    pub fn closed(text: &str) -> Result<KLFunction, crate::Error> {
        let e = Expr::parse(text)?;
        if let Some(bad) = e.variables().into_iter().find(|v| !matches!(v.role(), Role::S | Role::T) || v.index().is_some()) {
            return Err(ComparisonError::Definition(bad.to_string()).into());
        }
        Ok(KLFunction::Closed(e))
    }

    pub fn eval(&self, s: f64, t: f64) -> Result<f64, ComparisonError> {
        match self {
            KLFunction::Closed(e) => Ok(e.eval(&Env { s: Some(s), t: Some(t), ..Env::default() })?),
            KLFunction::Flow(flow) => flow.eval(s, t),
            KLFunction::Exponential { c, lambda } => Ok(c * s * (-lambda * t).exp()),
        }
    }

    /// `σ(s, lag)` for every lag; flows integrate all lags in one sweep.
    pub fn eval_lags(&self, s: f64, lags: &[f64]) -> Result<Vec<f64>, ComparisonError> {
        match self {
            KLFunction::Flow(flow) => flow.eval_many(s, lags),
            _ => lags.iter().map(|&t| self.eval(s, t)).collect(),
        }
    }
}

/// Sampled KL-property checks on `s_grid × t_grid`.
pub fn validate_kl(sigma: &KLFunction, s_grid: &[f64], t_grid: &[f64], tol: f64) -> Result<Vec<PropertyCheck>, ComparisonError> {
    let table: Vec<Vec<f64>> = s_grid.iter().map(|&s| sigma.eval_lags(s, t_grid)).collect::<Result<_, _>>()?;
    let mut in_s = Tracker::new("nondecreasing-in-s");
    let mut in_t = Tracker::new("nonincreasing-in-t");
    for (i, row) in table.iter().enumerate() {
        for j in 0..t_grid.len() {
            if i > 0 {
                let drop = table[i - 1][j] - row[j];
                if drop > tol {
                    in_s.record(drop, s_grid[i], row[j]);
                }
            }
            if j > 0 {
                let rise = row[j] - row[j - 1];
                if rise > tol {
                    in_t.record(rise, s_grid[i], row[j]);
                }
            }
        }
    }
    let mut limit = Tracker::new("vanishes-at-large-t");
    let t_large = t_grid.iter().copied().fold(0.0, f64::max) * 100.0 + 1e3;
    for &s in s_grid {
        let value = sigma.eval(s, t_large)?;
        if value > tol * (1.0 + s) {
            limit.record(value, s, value);
        }
    }
    let mut checks = vec![in_s.finish(), in_t.finish(), limit.finish()];
    if let KLFunction::Flow(_) = sigma {
        let mut identity = Tracker::new("identity-at-zero-time");
        for &s in s_grid {
            let value = sigma.eval(s, 0.0)?;
            if value != s {
                identity.record((value - s).abs(), s, value);
            }
        }
        checks.push(identity.finish());
    }
    Ok(checks)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cf(text: &str, class: FnClass) -> ComparisonFunction {
        ComparisonFunction::parse(text, class).unwrap()
    }

    #[test]
    fn quadratic_zeta_is_class_n() {
        let report = validate_comparison_fn(&cf("2*s^2", FnClass::N), 101).unwrap();
        assert!(report.passed(), "{report:?}");
    }

    #[test]
    fn identity_passes_class_but_is_not_a_contraction() {
        let a = cf("s", FnClass::PositiveDefinite);
        assert!(validate_comparison_fn(&a, 50).unwrap().passed());
        let c = check_strict_contraction(&a, GridSpec::new(50)).unwrap();
        assert!(!c.passed);
        let c = check_strict_contraction(&cf("s/1.21", FnClass::N), GridSpec::new(50)).unwrap();
        assert!(c.passed);
    }

    #[test]
    fn negated_identity_fails_class_k_at_one() {
        let report = validate_on(&cf("-s", FnClass::K), GridSpec { points: 2, s_max: 1.0 }).unwrap();
        assert!(!report.passed());
        let positive = report.check("positive").unwrap();
        assert_eq!(positive.worst.as_ref().unwrap().s, 1.0);
        let mono = report.check("strictly-increasing").unwrap();
        assert_eq!(mono.worst.as_ref().unwrap().s, 1.0);
    }

    #[test]
    fn rejects_foreign_variables() {
        let err = ComparisonFunction::new(Expr::parse("x[1]*s").unwrap(), FnClass::K).unwrap_err();
        assert_eq!(err, ComparisonError::Definition("x[1]".into()));
        assert!(validate_comparison_fn(&cf("s", FnClass::K), 1).is_err());
    }

    #[test]
    fn gain_of_vector_certificate() {
        let gamma = compose_gain(&cf("s^2/4", FnClass::KInfinity), &cf("2*s^2", FnClass::N)).unwrap();
        assert!((gamma.eval(1.0).unwrap() - 2.0 * 2f64.sqrt()).abs() < 1e-9);
    }

    #[test]
    fn gain_of_single_certificate() {
        let gamma = compose_gain(&cf("s^2/2", FnClass::KInfinity), &cf("2*s^2", FnClass::N)).unwrap();
        assert!((gamma.eval(1.0).unwrap() - 2.0).abs() < 1e-9);
    }

    #[test]
    fn identity_gain() {
        let gamma = compose_gain(&cf("s", FnClass::KInfinity), &cf("s", FnClass::N)).unwrap();
        assert!(gamma.eval(0.0).unwrap().abs() < 1e-12);
        assert!((gamma.eval(3.5).unwrap() - 3.5).abs() < 1e-11);
    }

    #[test]
    fn non_monotone_a1_cannot_be_inverted() {
        let err = compose_gain(&cf("s*(s-1)^2", FnClass::KInfinity), &cf("s", FnClass::N)).unwrap_err();
        assert!(matches!(err, ComparisonError::Inversion(_)));
    }

    #[test]
    fn generalized_inverse_of_plateau() {
        let sat = cf("min(s, 1)", FnClass::N);
        assert!(sat.inverse(2.0).is_err());
        assert!((sat.inverse(0.5).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn exponential_kl_validates() {
        let sigma = KLFunction::Exponential { c: 2.0, lambda: 0.5 };
        let checks = validate_kl(&sigma, &[0.0, 0.5, 1.0, 5.0], &[0.0, 0.1, 1.0, 10.0], 1e-12).unwrap();
        assert!(checks.iter().all(|c| c.passed));
        let bad = KLFunction::closed("s*t").unwrap();
        let checks = validate_kl(&bad, &[0.0, 1.0], &[0.0, 1.0], 1e-12).unwrap();
        assert!(!checks[1].passed);
    }
}
