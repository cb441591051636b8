//! Catalog of built-in systems and certificates.
//!
//! | name | content |
//! |------|---------|
//! | `ex41` | planar closed loop with held feedback `u = −2x₂(τ_i) + v` |
//! | `ex41-single` | `ex41` with the certificate `V = |x|²/2` |
//! | `ex41-vector` | `ex41` with the certificate `(x₁²/2, x₂²/2)` |
//! | `scalar-hold` | `ẋ = −2x(τ_i)` with `V = x²/2` |
//! | `ex412` | planar loop `ẋ₂ = f₂ − R(x₂(τ_i) + a x₁(τ_i))` with hypothesis (P) data |
//! | `backstep-scalar` | `ẋ = u`, `k(x) = −2x`, `V = x²/2`, `ζ(s) = s²` |

use serde::Serialize;

use crate::backstep::{BackstepCertificate, HypothesisP, TriangularSystem, Variant};
use crate::comparison::{ComparisonFunction, FnClass};
use crate::expr::Expr;
use crate::model::{Interval, PlantModel, SystemModel};
use crate::verify::LyapunovCertificate;
use crate::{Error, Result};

pub const BUILTIN_NAMES: [&str; 6] = ["ex41", "ex41-single", "ex41-vector", "scalar-hold", "ex412", "backstep-scalar"];

/// Fraction of the closed-form bound used to fix `r`-dependent decrease
/// rates of the catalog certificates.
pub const DESIGN_FRACTION: f64 = 0.9;

/// Parameters of the catalog entries.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BuiltinParams {
    /// Razumikhin constant in `a(s) = s/c²`.
    pub c: f64,
    /// `D = [delta, big_delta] × [−1, 1]`.
    pub delta: f64,
    pub big_delta: f64,
    /// Sampling period.
    pub r: f64,
    /// Constant `a` of hypothesis (P).
    pub a: f64,
    /// Feedback gain `R` of the planar loop.
    pub big_r: f64,
    /// Decrease rate of `scalar-hold`.
    pub eps: f64,
}

impl Default for BuiltinParams {
    fn default() -> Self {
        BuiltinParams { c: 1.1, delta: 0.0, big_delta: 1.0, r: 0.11, a: 0.0, big_r: 2.0, eps: 0.1 }
    }
}

/// Data for a hypothesis (P) check.
#[derive(Clone, Debug)]
pub struct PlanarData {
    pub f1: Expr,
    pub f2: Expr,
    pub d_box: Vec<Interval>,
    pub constants: HypothesisP,
}

#[derive(Clone, Debug, Default)]
pub struct Builtin {
    pub name: String,
    pub model: Option<SystemModel>,
    pub plant: Option<PlantModel>,
    pub certificate: Option<LyapunovCertificate>,
    pub triangular: Option<(TriangularSystem, BackstepCertificate)>,
    pub planar: Option<PlanarData>,
}

fn num(v: f64) -> String {
    format!("({v})")
}

fn cf(text: &str, class: FnClass) -> Result<ComparisonFunction> {
    ComparisonFunction::parse(text, class)
}

fn parse_all(texts: &[&str]) -> Result<Vec<Expr>> {
    texts.iter().map(|t| Expr::parse(t).map_err(Error::from)).collect()
}

fn ex41_d_box(p: &BuiltinParams) -> Result<Vec<Interval>> {
    if !(p.delta >= 0.0 && p.delta <= p.big_delta && p.big_delta.is_finite()) {
        return Err(Error::Input(format!("need 0 <= delta <= Delta, got [{}, {}]", p.delta, p.big_delta)));
    }
    Ok(vec![Interval::new(p.delta, p.big_delta), Interval::new(-1.0, 1.0)])
}

const EX41_F1: &str = "-2*x[1] - d[1]*x[1]^3 + x[2]";

/// The planar closed loop with held feedback and actuator error `v`.
pub fn ex41_model(p: &BuiltinParams) -> Result<SystemModel> {
    SystemModel::parse(2, &[EX41_F1, "d[2]*x[2]^2 - x[2]^3 - 2*xs[2] + v[1]"], &["x[1]", "x[2]"], &num(p.r), p.r, ex41_d_box(p)?, vec![Interval::unbounded()])
}

/// Open-loop plant of `ex41` with continuous-time feedback `k = −2x₂`.
pub fn ex41_plant(p: &BuiltinParams) -> Result<PlantModel> {
    PlantModel::new(2, parse_all(&[EX41_F1, "d[2]*x[2]^2 - x[2]^3 + u[1]"])?, parse_all(&["x[1]", "x[2]"])?, parse_all(&["-2*x[2]"])?, ex41_d_box(p)?, vec![Interval::unbounded()])
}

fn check_c(c: f64) -> Result<()> {
    if !(c > 1.0 && c.is_finite()) {
        return Err(Error::Input(format!("c must exceed 1, got {c}")));
    }
    Ok(())
}

/// Single quadratic certificate with `W = μ|x|²`,
/// `μ = (7 − 40c²r_d − 8r_d)/8` at `r_d = 0.9·7/(40c² + 8)`.
pub fn ex41_single_certificate(c: f64) -> Result<LyapunovCertificate> {
    check_c(c)?;
    let r_d = DESIGN_FRACTION * 7.0 / (40.0 * c * c + 8.0);
    let mu = (7.0 - 40.0 * c * c * r_d - 8.0 * r_d) / 8.0;
    let b = format!("{c2}*(x[1]^2 + x[2]^2) + {c3}*(x[1]^2 + x[2]^2)^(3/2) + {lin}*sqrt(x[1]^2 + x[2]^2)", c2 = num(c * c), c3 = num(c * c * c), lin = num(2.0 * c + 0.5));
    LyapunovCertificate::new(
        2,
        parse_all(&["x[1]^2/2 + x[2]^2/2"])?,
        vec![cf(&format!("{}*s", num(2.0 * mu)), FnClass::PositiveDefinite)?],
        cf(&format!("s/{}", num(c * c)), FnClass::N)?,
        cf("2*s^2", FnClass::N)?,
        cf("s^2/2", FnClass::KInfinity)?,
        cf("s^2/2", FnClass::KInfinity)?,
        parse_all(&["x[2]"])?,
    )?
    .with_analytic_b(vec![Some(Expr::parse(&b)?)])?
    .with_w(Expr::parse(&format!("{}*(x[1]^2 + x[2]^2)", num(mu)))?)
}

/// Vector certificate `(x₁²/2, x₂²/2)` with `ρ₁(s) = (2 − c)s/2` and
/// `ρ₂(s) = (1 − 2r_d − 5c²r_d)s/2` at `r_d = 0.9/(5c² + 2)`.
pub fn ex41_vector_certificate(c: f64) -> Result<LyapunovCertificate> {
    if !(c > 1.0 && c < 2.0) {
        return Err(Error::Input(format!("c must lie in (1, 2), got {c}")));
    }
    let r_d = DESIGN_FRACTION / (5.0 * c * c + 2.0);
    let rho2 = (1.0 - 2.0 * r_d - 5.0 * c * c * r_d) / 2.0;
    let b2 = format!("{}*x[2]^2 + {}*abs(x[2])^3 + {}*abs(x[2])", num(c * c), num(c * c * c), num(2.0 * c + 0.5));
    LyapunovCertificate::new(
        2,
        parse_all(&["x[1]^2/2", "x[2]^2/2"])?,
        vec![cf(&format!("{}*s", num((2.0 - c) / 2.0)), FnClass::PositiveDefinite)?, cf(&format!("{}*s", num(rho2)), FnClass::PositiveDefinite)?],
        cf(&format!("s/{}", num(c * c)), FnClass::N)?,
        cf("2*s^2", FnClass::N)?,
        cf("s^2/4", FnClass::KInfinity)?,
        cf("s^2/2", FnClass::KInfinity)?,
        parse_all(&["x[2]", "x[2]"])?,
    )?
    .with_analytic_b(vec![None, Some(Expr::parse(&b2)?)])
}

/// `ẋ = −2x(τ_i)`.
pub fn scalar_hold_model(r: f64) -> Result<SystemModel> {
    SystemModel::parse(1, &["-2*xs[1]"], &["x[1]"], &num(r), r, vec![], vec![])
}

/// `V = x²/2`, `ρ(s) = εs`, `a(s) = s/c²`, `g = x`.
pub fn scalar_hold_certificate(c: f64, eps: f64) -> Result<LyapunovCertificate> {
    check_c(c)?;
    LyapunovCertificate::new(
        1,
        parse_all(&["x[1]^2/2"])?,
        vec![cf(&format!("{}*s", num(eps)), FnClass::PositiveDefinite)?],
        cf(&format!("s/{}", num(c * c)), FnClass::N)?,
        cf("2*s^2", FnClass::N)?,
        cf("s^2/2", FnClass::KInfinity)?,
        cf("s^2/2", FnClass::KInfinity)?,
        parse_all(&["x[1]"])?,
    )
}

/// Largest `r` for which `scalar-hold` satisfies the decrease condition:
/// `r ≤ (1 − ε/4)/(2c)`.
pub fn scalar_hold_masp(c: f64, eps: f64) -> f64 {
    (1.0 - eps / 4.0) / (2.0 * c)
}

const PLANAR_F2: &str = "d[2]*x[2]^2 - x[2]^3";

/// `ẋ₁ = f₁`, `ẋ₂ = f₂ − R(x₂(τ_i) + a x₁(τ_i))` with the functions of `ex41`.
pub fn ex412_model(p: &BuiltinParams) -> Result<SystemModel> {
    let f2 = format!("{PLANAR_F2} - {}*(xs[2] + {}*xs[1])", num(p.big_r), num(p.a));
    SystemModel::parse(2, &[EX41_F1, &f2], &["x[1]", "x[2]"], &num(p.r), p.r, ex41_d_box(p)?, vec![])
}

/// `f₁, f₂` of `ex41` with `c = 1.5`, `L = 10`, `γ = 6`.
pub fn ex412_planar(p: &BuiltinParams) -> Result<PlanarData> {
    Ok(PlanarData {
        f1: Expr::parse(EX41_F1)?,
        f2: Expr::parse(PLANAR_F2)?,
        d_box: ex41_d_box(p)?,
        constants: HypothesisP { c: 1.5, a: p.a, l: 10.0, gamma: 6.0 },
    })
}

/// `ẋ = u`, `k = −2x`, `V = x²/2`, `W = (2 − √2)x²`, `ζ(s) = s²`, `a(s) = s/2`.
pub fn backstep_scalar() -> Result<(TriangularSystem, BackstepCertificate)> {
    let tri = TriangularSystem::new(vec![vec![Expr::num(0.0)]], vec![Expr::num(1.0)], vec![])?;
    let cert = BackstepCertificate::new(
        1,
        Expr::parse("x[1]^2/2")?,
        Expr::parse("-2*x[1]")?,
        Expr::parse("(2 - sqrt(2))*x[1]^2")?,
        cf("s^2", FnClass::N)?,
        cf("s/2", FnClass::N)?,
        cf("s^2/2", FnClass::KInfinity)?,
        Variant::MeasurementError,
    )?;
    Ok((tri, cert))
}

/// Looks up a catalog entry.
pub fn builtin(name: &str, p: &BuiltinParams) -> Result<Builtin> {
    let mut b = Builtin { name: name.to_string(), ..Builtin::default() };
    match name {
        "ex41" => {
            b.model = Some(ex41_model(p)?);
            b.plant = Some(ex41_plant(p)?);
        }
        "ex41-single" => {
            b.model = Some(ex41_model(p)?);
            b.plant = Some(ex41_plant(p)?);
            b.certificate = Some(ex41_single_certificate(p.c)?);
        }
        "ex41-vector" => {
            b.model = Some(ex41_model(p)?);
            b.plant = Some(ex41_plant(p)?);
            b.certificate = Some(ex41_vector_certificate(p.c)?);
        }
        "scalar-hold" => {
            b.model = Some(scalar_hold_model(p.r)?);
            b.certificate = Some(scalar_hold_certificate(p.c, p.eps)?);
        }
        "ex412" => {
            b.model = Some(ex412_model(p)?);
            b.planar = Some(ex412_planar(p)?);
        }
        "backstep-scalar" => {
            let (tri, cert) = backstep_scalar()?;
            b.model = Some(crate::backstep::closed_loop(&tri, &cert, p.r)?);
            b.triangular = Some((tri, cert));
        }
        _ => return Err(Error::Input(format!("unknown builtin `{name}`; available: {}", BUILTIN_NAMES.join(", ")))),
    }
    Ok(b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::emulate_feedback;

    #[test]
    fn catalog_loads() {
        for name in BUILTIN_NAMES {
            builtin(name, &BuiltinParams::default()).unwrap();
        }
        assert!(builtin("nope", &BuiltinParams::default()).is_err());
    }

    #[test]
    fn emulated_plant_matches_closed_loop() {
        let p = BuiltinParams::default();
        let direct = ex41_model(&p).unwrap();
        let emulated = emulate_feedback(&ex41_plant(&p).unwrap(), Expr::num(p.r), p.r).unwrap();
        let (x, xs, d, v) = ([0.7, -1.3], [0.2, 0.9], [0.5, -0.25], [0.3]);
        let (a, b) = (direct.eval_f(&x, &xs, &d, &v, &v).unwrap(), emulated.eval_f(&x, &xs, &d, &v, &v).unwrap());
        assert!(a.iter().zip(&b).all(|(p, q)| (p - q).abs() < 1e-12), "{a:?} {b:?}");
    }

    #[test]
    fn certificates_validate() {
        assert!(ex41_vector_certificate(1.1).unwrap().validate(200).unwrap().passed());
        assert!(ex41_single_certificate(1.1).unwrap().validate(200).unwrap().passed());
        assert!(scalar_hold_certificate(1.1, 0.1).unwrap().validate(200).unwrap().passed());
        assert!((scalar_hold_masp(1.1, 0.1) - 0.443181818).abs() < 1e-8);
    }

    #[test]
    fn planar_loop_reduces_to_ex41() {
        let p = BuiltinParams::default();
        let a = ex412_model(&p).unwrap();
        let b = ex41_model(&p).unwrap();
        let (x, xs, d) = ([0.7, -1.3], [0.2, 0.9], [0.5, -0.25]);
        assert_eq!(a.eval_f(&x, &xs, &d, &[], &[]).unwrap(), b.eval_f(&x, &xs, &d, &[0.0], &[0.0]).unwrap());
    }
}
