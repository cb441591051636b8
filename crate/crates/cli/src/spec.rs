//! JSON system specifications.
//!
//! A document describes a closed loop (`f`, `H`, `h`, `r`, `D`, `U`), and
//! optionally an open-loop plant with feedback, a Lyapunov certificate, a
//! triangular backstepping design and the data of a planar hypothesis check.
//! Errors name the offending field path.

use std::path::Path;

use serde::Deserialize;

use sdlyap_core::backstep::{closed_loop, BackstepCertificate, HypothesisP, TriangularSystem, Variant};
use sdlyap_core::builtins::PlanarData;
use sdlyap_core::sim::emulate_feedback;
use sdlyap_core::verify::LyapunovCertificate;
use sdlyap_core::{ComparisonFunction, Expr, FnClass, Interval, PlantModel, SystemModel};

#[derive(Debug, thiserror::Error)]
pub enum SpecError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: {message}")]
    Schema { path: String, message: String },
}

fn schema(path: impl Into<String>, message: impl Into<String>) -> SpecError {
    SpecError::Schema { path: path.into(), message: message.into() }
}

/// A numeric bound; `"inf"` and `"-inf"` stand for the infinities.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum Bound {
    Num(f64),
    Text(String),
}

impl Bound {
    fn value(&self, path: &str) -> Result<f64, SpecError> {
        match self {
            Bound::Num(v) => Ok(*v),
            Bound::Text(t) => match t.trim().to_ascii_lowercase().as_str() {
                "inf" | "+inf" | "infinity" => Ok(f64::INFINITY),
                "-inf" | "-infinity" => Ok(f64::NEG_INFINITY),
                _ => Err(schema(path, format!("expected a number or \"inf\", found {t:?}"))),
            },
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum NumOrExpr {
    Num(f64),
    Expr(String),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Doc {
    n: usize,
    #[serde(default)]
    f: Option<Vec<String>>,
    #[serde(rename = "H", default)]
    output: Option<Vec<String>>,
    #[serde(default)]
    h: Option<NumOrExpr>,
    #[serde(default)]
    r: Option<f64>,
    #[serde(rename = "D", default)]
    d: Vec<[Bound; 2]>,
    #[serde(rename = "U", default)]
    u: Vec<[Bound; 2]>,
    #[serde(default)]
    plant: Option<PlantDoc>,
    #[serde(default)]
    lyapunov: Option<LyapunovDoc>,
    #[serde(default)]
    backstep: Option<BackstepDoc>,
    #[serde(default)]
    planar: Option<PlanarDoc>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PlantDoc {
    f_open: Vec<String>,
    k: Vec<String>,
    /// Measurement-error box, one interval per state.
    #[serde(rename = "E", default)]
    e: Option<Vec<[Bound; 2]>>,
    #[serde(default = "yes")]
    actuator_error: bool,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct LyapunovDoc {
    #[serde(rename = "V")]
    v: Vec<String>,
    #[serde(rename = "gradV", default)]
    grad_v: Option<Vec<Vec<String>>>,
    #[serde(default)]
    rho: Option<Vec<String>>,
    a: String,
    zeta: String,
    g: Vec<String>,
    a1: String,
    a2: String,
    #[serde(default)]
    analytic_b: Option<Vec<Option<String>>>,
    #[serde(rename = "W", default)]
    w: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct BackstepDoc {
    phi: Vec<Vec<String>>,
    g: Vec<String>,
    #[serde(rename = "V")]
    v: String,
    k: String,
    #[serde(rename = "W")]
    w: String,
    zeta: String,
    a: String,
    a1: String,
    #[serde(default = "measurement")]
    variant: String,
}

fn measurement() -> String {
    "measurement-error".into()
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PlanarDoc {
    f1: String,
    f2: String,
    c: f64,
    #[serde(default)]
    a: f64,
    #[serde(rename = "L")]
    l: f64,
    gamma: f64,
}

/// Everything a specification file may define.
#[derive(Debug, Default)]
pub struct SystemSpec {
    pub model: Option<SystemModel>,
    pub plant: Option<PlantModel>,
    pub certificate: Option<LyapunovCertificate>,
    pub triangular: Option<(TriangularSystem, BackstepCertificate)>,
    pub planar: Option<PlanarData>,
}

fn expr(path: &str, text: &str) -> Result<Expr, SpecError> {
    Expr::parse(text).map_err(|e| schema(path, format!("{e} in `{text}`")))
}

fn exprs(path: &str, texts: &[String]) -> Result<Vec<Expr>, SpecError> {
    texts.iter().enumerate().map(|(i, t)| expr(&format!("{path}[{i}]"), t)).collect()
}

fn cf(path: &str, text: &str, class: FnClass) -> Result<ComparisonFunction, SpecError> {
    ComparisonFunction::parse(text, class).map_err(|e| schema(path, format!("{e} in `{text}`")))
}

fn intervals(path: &str, raw: &[[Bound; 2]]) -> Result<Vec<Interval>, SpecError> {
    raw.iter()
        .enumerate()
        .map(|(i, [lo, hi])| {
            let p = format!("{path}[{i}]");
            let (lo, hi) = (lo.value(&p)?, hi.value(&p)?);
            if lo.is_nan() || hi.is_nan() || lo > hi {
                return Err(schema(p, format!("invalid interval [{lo}, {hi}]")));
            }
            Ok(Interval::new(lo, hi))
        })
        .collect()
}

fn expect_len(path: &str, found: usize, expected: usize, what: &str) -> Result<(), SpecError> {
    if found != expected {
        return Err(schema(path, format!("expected {expected} {what}, found {found}")));
    }
    Ok(())
}

fn core(path: &str) -> impl Fn(sdlyap_core::Error) -> SpecError + '_ {
    move |e| schema(path, e.to_string())
}

/// Parses a specification document.
pub fn parse_system_spec(text: &str) -> Result<SystemSpec, SpecError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let doc: Doc = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        schema(if path == "." { "$".to_string() } else { path }, e.into_inner().to_string())
    })?;
    let n = doc.n;
    if n == 0 {
        return Err(schema("n", "state dimension must be positive"));
    }
    let d_box = intervals("D", &doc.d)?;
    let u_box = intervals("U", &doc.u)?;
    let output = match &doc.output {
        Some(h) => exprs("H", h)?,
        None => (1..=n).map(|i| Expr::var("x", i)).collect(),
    };
    let r = doc.r;
    if let Some(r) = r {
        if !(r > 0.0 && r.is_finite()) {
            return Err(schema("r", format!("sampling bound must be positive, got {r}")));
        }
    }
    let h = match &doc.h {
        Some(NumOrExpr::Num(v)) => Some(Expr::num(*v)),
        Some(NumOrExpr::Expr(t)) => Some(expr("h", t)?),
        None => r.map(Expr::num),
    };
    let sampling = || -> Result<(Expr, f64), SpecError> {
        let r = r.ok_or_else(|| schema("r", "required"))?;
        Ok((h.clone().unwrap_or_else(|| Expr::num(r)), r))
    };

    let mut spec = SystemSpec::default();

    if let Some(p) = &doc.plant {
        let m = p.k.len();
        let f_open = exprs("plant.f_open", &p.f_open)?;
        expect_len("plant.f_open", f_open.len(), n, "expressions (one per state)")?;
        let k = exprs("plant.k", &p.k)?;
        let v_box = if p.actuator_error {
            expect_len("U", u_box.len(), m, "intervals (one per plant input)")?;
            u_box.clone()
        } else {
            vec![Interval::point(0.0); m]
        };
        let mut plant = PlantModel::new(n, f_open, output.clone(), k, d_box.clone(), v_box).map_err(core("plant"))?;
        if !p.actuator_error {
            plant.actuator_error = false;
            plant.v_box.clear();
        }
        if let Some(e) = &p.e {
            let e_box = intervals("plant.E", e)?;
            expect_len("plant.E", e_box.len(), n, "intervals (one per state)")?;
            plant.e_box = e_box;
            plant.measurement_error = true;
        }
        plant.validate().map_err(core("plant"))?;
        spec.plant = Some(plant);
    }

    if let Some(b) = &doc.backstep {
        expect_len("backstep.phi", b.phi.len(), n, "rows")?;
        let phi = b.phi.iter().enumerate().map(|(i, row)| exprs(&format!("backstep.phi[{i}]"), row)).collect::<Result<Vec<_>, _>>()?;
        let g = exprs("backstep.g", &b.g)?;
        let tri = TriangularSystem::new(phi, g, d_box.clone()).map_err(core("backstep"))?;
        let variant = match b.variant.as_str() {
            "measurement-error" => Variant::MeasurementError,
            "actuator-error" => Variant::ActuatorError,
            other => return Err(schema("backstep.variant", format!("expected \"measurement-error\" or \"actuator-error\", found {other:?}"))),
        };
        let cert = BackstepCertificate::new(
            n,
            expr("backstep.V", &b.v)?,
            expr("backstep.k", &b.k)?,
            expr("backstep.W", &b.w)?,
            cf("backstep.zeta", &b.zeta, FnClass::N)?,
            cf("backstep.a", &b.a, FnClass::N)?,
            cf("backstep.a1", &b.a1, FnClass::KInfinity)?,
            variant,
        )
        .map_err(core("backstep"))?;
        spec.triangular = Some((tri, cert));
    }

    if let Some(p) = &doc.planar {
        if n != 2 {
            return Err(schema("planar", "the planar hypothesis needs n = 2"));
        }
        spec.planar = Some(PlanarData {
            f1: expr("planar.f1", &p.f1)?,
            f2: expr("planar.f2", &p.f2)?,
            d_box: d_box.clone(),
            constants: HypothesisP { c: p.c, a: p.a, l: p.l, gamma: p.gamma },
        });
    }

    spec.model = match (&doc.f, &spec.plant, &spec.triangular) {
        (Some(f), _, _) => {
            let f = exprs("f", f)?;
            expect_len("f", f.len(), n, "expressions (one per state)")?;
            let (h, r) = sampling()?;
            Some(SystemModel::new(n, f, output.clone(), h, r, d_box.clone(), u_box.clone()).map_err(core("f"))?)
        }
        (None, Some(plant), _) => {
            let (h, r) = sampling()?;
            Some(emulate_feedback(plant, h, r).map_err(core("plant"))?)
        }
        (None, None, Some((tri, cert))) => {
            let (_, r) = sampling()?;
            Some(closed_loop(tri, cert, r).map_err(core("backstep"))?)
        }
        (None, None, None) if spec.planar.is_some() => None,
        (None, None, None) => return Err(schema("f", "required unless plant, backstep or planar is given")),
    };

    if let Some(l) = &doc.lyapunov {
        let k = l.v.len();
        let v = exprs("lyapunov.V", &l.v)?;
        let rho = match &l.rho {
            Some(rho) => {
                expect_len("lyapunov.rho", rho.len(), k, "functions (one per V)")?;
                rho.iter().enumerate().map(|(i, t)| cf(&format!("lyapunov.rho[{i}]"), t, FnClass::PositiveDefinite)).collect::<Result<Vec<_>, _>>()?
            }
            None if l.w.is_some() => vec![ComparisonFunction::parse("s", FnClass::PositiveDefinite).expect("literal"); k],
            None => return Err(schema("lyapunov.rho", "required unless W is given")),
        };
        expect_len("lyapunov.g", l.g.len(), k, "functions (one per V)")?;
        let mut cert = LyapunovCertificate::new(
            n,
            v,
            rho,
            cf("lyapunov.a", &l.a, FnClass::N)?,
            cf("lyapunov.zeta", &l.zeta, FnClass::N)?,
            cf("lyapunov.a1", &l.a1, FnClass::KInfinity)?,
            cf("lyapunov.a2", &l.a2, FnClass::KInfinity)?,
            exprs("lyapunov.g", &l.g)?,
        )
        .map_err(core("lyapunov"))?;
        if let Some(grad) = &l.grad_v {
            let rows = grad.iter().enumerate().map(|(i, row)| exprs(&format!("lyapunov.gradV[{i}]"), row)).collect::<Result<Vec<_>, _>>()?;
            cert = cert.with_gradients(rows).map_err(core("lyapunov.gradV"))?;
        }
        if let Some(b) = &l.analytic_b {
            expect_len("lyapunov.analytic_b", b.len(), k, "entries (one per V, null allowed)")?;
            let parsed = b.iter().enumerate().map(|(i, t)| t.as_ref().map(|t| expr(&format!("lyapunov.analytic_b[{i}]"), t)).transpose()).collect::<Result<Vec<_>, _>>()?;
            cert = cert.with_analytic_b(parsed).map_err(core("lyapunov.analytic_b"))?;
        }
        if let Some(w) = &l.w {
            cert = cert.with_w(expr("lyapunov.W", w)?).map_err(core("lyapunov.W"))?;
        }
        let validation = cert.validate(201).map_err(core("lyapunov"))?;
        if !validation.passed() {
            let failed: Vec<&str> = validation.classes.iter().filter(|(_, r)| !r.passed()).map(|(name, _)| name.as_str()).collect();
            let mut message = String::from("certificate fails its class checks");
            if !failed.is_empty() {
                message.push_str(&format!(": {}", failed.join(", ")));
            }
            if !validation.contraction.passed {
                message.push_str("; a(s) < s is violated");
            }
            return Err(schema("lyapunov", message));
        }
        spec.certificate = Some(cert);
    }

    Ok(spec)
}

/// Reads and parses a specification file.
pub fn load_system_spec(path: &Path) -> Result<SystemSpec, SpecError> {
    let text = std::fs::read_to_string(path).map_err(|source| SpecError::Io { path: path.display().to_string(), source })?;
    parse_system_spec(&text)
}
