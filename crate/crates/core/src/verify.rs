//! Sampled falsification of vector Lyapunov conditions for sampled-data
//! systems.
//!
//! For every member `V_i` of the family and every grid point `x`, the
//! decrease condition `∇V_i(x)·f(x, x₀, d, v, v₀) ≤ −ρ_i(V_i(x))` is tested
//! on random `(x₀, d, v, v₀)` drawn from the held-state set
//! `B_i^g(r, x) = {x₀ : |g_i(x₀) − g_i(x)| ≤ r·b_i^g(x)}` intersected with
//! `{a(V(x₀)) ≤ V_i(x)}`. `b_i^g(x)` is itself estimated by sampling.
//! Points where the Razumikhin premise `a(V(x)) ≤ V_i(x)` fails impose no
//! condition and are skipped.
//!
//! A pass means that no counterexample was found under the budget.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::comparison::{check_strict_contraction, validate_comparison_fn, ClassReport, ComparisonFunction, FnClass, GridSpec, PropertyCheck};
use crate::expr::{Compiled, Expr, Role};
use crate::model::{compile_state_fn, Interval, Region, SystemModel};
use crate::report::{MarginTracker, SampleBudget, VerificationReport, Witness};
use crate::rng::stream;
use crate::{Error, Result};

/// Euclidean norm.
#[inline]
pub fn norm(x: &[f64]) -> f64 {
    x.iter().map(|a| a * a).sum::<f64>().sqrt()
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| p * q).sum()
}

const LEVEL_TOL: f64 = 1e-12;
const BISECTION_STEPS: usize = 20;

const PURPOSE_DECREASE: u64 = 0x100;
const PURPOSE_B: u64 = 0x200;
const PURPOSE_B_CHECK: u64 = 0x300;
const PURPOSE_HYPOTHESES: u64 = 0x400;

/// Data of (H3): `|x| ≤ R + p(|H(x)|)`.
#[derive(Clone, Debug)]
pub struct StateBound {
    pub r: f64,
    pub p: ComparisonFunction,
}

/// A vector Lyapunov certificate `{V_i, ∇V_i, ρ_i}` with comparison
/// functions `a, ζ, a₁, a₂`, auxiliary functions `g_i` and optional
/// analytic bounds on `b_i^g`.
///
/// When `w` is set the certificate is a single Lyapunov function and the
/// decrease condition uses `−W(x)` on the right side.
#[derive(Clone, Debug)]
pub struct LyapunovCertificate {
    pub n: usize,
    pub v: Vec<Expr>,
    pub grad_v: Vec<Vec<Expr>>,
    pub rho: Vec<ComparisonFunction>,
    pub a: ComparisonFunction,
    pub zeta: ComparisonFunction,
    pub a1: ComparisonFunction,
    pub a2: ComparisonFunction,
    pub g: Vec<Expr>,
    pub analytic_b: Vec<Option<Expr>>,
    pub w: Option<Expr>,
    pub state_bound: Option<StateBound>,
}

fn check_state_expr(what: &str, e: &Expr, n: usize) -> Result<()> {
    match e.variables().into_iter().find(|v| v.role() != Role::X || v.index().is_none_or(|i| i == 0 || i > n)) {
        Some(bad) => Err(Error::Model(format!("{what} uses `{bad}`; only x[1..{n}] is allowed"))),
        None => Ok(()),
    }
}

/// Result of validating the comparison functions of a certificate.
#[derive(Clone, Debug, Serialize)]
pub struct CertificateValidation {
    pub classes: Vec<(String, ClassReport)>,
    pub contraction: PropertyCheck,
}

impl CertificateValidation {
    pub fn passed(&self) -> bool {
        self.contraction.passed && self.classes.iter().all(|(_, r)| r.passed())
    }
}

impl LyapunovCertificate {
    /// Builds a certificate, deriving `∇V_i` symbolically.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        n: usize,
        v: Vec<Expr>,
        rho: Vec<ComparisonFunction>,
        a: ComparisonFunction,
        zeta: ComparisonFunction,
        a1: ComparisonFunction,
        a2: ComparisonFunction,
        g: Vec<Expr>,
    ) -> Result<LyapunovCertificate> {
        let k = v.len();
        if k == 0 {
            return Err(Error::Model("certificate needs at least one Lyapunov function".into()));
        }
        if rho.len() != k || g.len() != k {
            return Err(Error::Model(format!("certificate has {k} functions V but {} rho and {} g", rho.len(), g.len())));
        }
        for (i, e) in v.iter().enumerate() {
            check_state_expr(&format!("V[{}]", i + 1), e, n)?;
        }
        for (i, e) in g.iter().enumerate() {
            check_state_expr(&format!("g[{}]", i + 1), e, n)?;
        }
        let grad_v = v
            .iter()
            .enumerate()
            .map(|(i, e)| e.gradient("x", n).map_err(|err| Error::Model(format!("gradient of V[{}]: {err}; supply it explicitly", i + 1))))
            .collect::<Result<Vec<_>>>()?;
        Ok(LyapunovCertificate { n, v, grad_v, rho, a, zeta, a1, a2, g, analytic_b: vec![None; k], w: None, state_bound: None })
    }

    pub fn with_gradients(mut self, grad_v: Vec<Vec<Expr>>) -> Result<Self> {
        if grad_v.len() != self.k() || grad_v.iter().any(|gr| gr.len() != self.n) {
            return Err(Error::Model("gradient list must have k rows of n expressions".into()));
        }
        for (i, row) in grad_v.iter().enumerate() {
            for e in row {
                check_state_expr(&format!("gradV[{}]", i + 1), e, self.n)?;
            }
        }
        self.grad_v = grad_v;
        Ok(self)
    }

    pub fn with_analytic_b(mut self, b: Vec<Option<Expr>>) -> Result<Self> {
        if b.len() != self.k() {
            return Err(Error::Model(format!("analytic_b has {} entries, expected {}", b.len(), self.k())));
        }
        for (i, e) in b.iter().enumerate() {
            if let Some(e) = e {
                check_state_expr(&format!("analytic_b[{}]", i + 1), e, self.n)?;
            }
        }
        self.analytic_b = b;
        Ok(self)
    }

    /// Single-function variant with decrease rate `W`.
    pub fn with_w(mut self, w: Expr) -> Result<Self> {
        if self.k() != 1 {
            return Err(Error::Model("W applies to single-function certificates only".into()));
        }
        check_state_expr("W", &w, self.n)?;
        self.w = Some(w);
        Ok(self)
    }

    pub fn with_state_bound(mut self, bound: StateBound) -> Self {
        self.state_bound = Some(bound);
        self
    }

    pub fn k(&self) -> usize {
        self.v.len()
    }

    pub fn is_single(&self) -> bool {
        self.w.is_some()
    }

    /// Sampled class checks of `ρ_i, a, ζ, a₁, a₂` and `a(s) < s`.
    pub fn validate(&self, grid_points: usize) -> Result<CertificateValidation> {
        let mut classes = Vec::new();
        let mut push = |name: String, f: &ComparisonFunction, class: FnClass| -> Result<()> {
            let mut probe = f.clone();
            if probe.class() != class {
                probe = ComparisonFunction::new(f.body().cloned().unwrap_or_else(|| Expr::num(0.0)), class)?;
            }
            classes.push((name, validate_comparison_fn(&probe, grid_points)?));
            Ok(())
        };
        if !self.is_single() {
            for (i, rho) in self.rho.iter().enumerate() {
                push(format!("rho[{}]", i + 1), rho, FnClass::PositiveDefinite)?;
            }
        }
        push("a".into(), &self.a, FnClass::N)?;
        push("zeta".into(), &self.zeta, FnClass::N)?;
        push("a1".into(), &self.a1, FnClass::KInfinity)?;
        push("a2".into(), &self.a2, FnClass::KInfinity)?;
        let contraction = check_strict_contraction(&self.a, GridSpec::new(grid_points))?;
        Ok(CertificateValidation { classes, contraction })
    }
}

/// Compiled form of a certificate.
struct Prepared {
    v: Vec<Compiled>,
    grad_v: Vec<Vec<Compiled>>,
    g: Vec<Compiled>,
    grad_g: Vec<Vec<Compiled>>,
    b: Vec<Option<Compiled>>,
    w: Option<Compiled>,
}

impl Prepared {
    fn new(cert: &LyapunovCertificate, model: &SystemModel) -> Result<Prepared> {
        if cert.n != model.n() {
            return Err(Error::Model(format!("certificate is for n = {} but the model has n = {}", cert.n, model.n())));
        }
        let n = cert.n;
        let compile_all = |es: &[Expr]| es.iter().map(|e| compile_state_fn(e, n)).collect::<Result<Vec<_>>>();
        let grad_g = cert
            .g
            .iter()
            .enumerate()
            .map(|(i, e)| {
                let grad = e.gradient("x", n).map_err(|err| Error::Model(format!("g[{}] must be differentiable: {err}", i + 1)))?;
                compile_all(&grad)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Prepared {
            v: compile_all(&cert.v)?,
            grad_v: cert.grad_v.iter().map(|row| compile_all(row)).collect::<Result<_>>()?,
            g: compile_all(&cert.g)?,
            grad_g,
            b: cert.analytic_b.iter().map(|b| b.as_ref().map(|e| compile_state_fn(e, n)).transpose()).collect::<Result<_>>()?,
            w: cert.w.as_ref().map(|e| compile_state_fn(e, n)).transpose()?,
        })
    }

    fn vi(&self, i: usize, x: &[f64]) -> Result<f64> {
        Ok(self.v[i].eval(x)?)
    }

    fn vmax(&self, x: &[f64]) -> Result<f64> {
        let mut best = f64::NEG_INFINITY;
        for v in &self.v {
            best = best.max(v.eval(x)?);
        }
        Ok(best)
    }

    fn grad(set: &[Compiled], x: &[f64], out: &mut [f64]) -> Result<()> {
        for (o, c) in out.iter_mut().zip(set) {
            *o = c.eval(x)?;
        }
        Ok(())
    }
}

/// Half-width of a box containing `{z : a(V(z)) ≤ level}`.
///
/// `V(z) ≤ a⁻¹(level)` and `a₁(|H(z)|) ≤ V(z)` give
/// `|H(z)| ≤ a₁⁻¹(a⁻¹(level))`; with `H` the identity this bounds `|z|`,
/// otherwise (H3) converts it into a bound on `|z|`.
pub fn sublevel_radius(cert: &LyapunovCertificate, model: &SystemModel, level: f64) -> Result<f64> {
    if level <= 0.0 {
        return Ok(0.0);
    }
    let v_level = cert.a.inverse(level).map_err(|e| Error::Verification(format!("sublevel set of a(V) at {level} is not bounded: {e}")))?;
    let h_bound = cert.a1.inverse(v_level)?;
    if model.output_is_identity() {
        Ok(h_bound)
    } else if let Some(sb) = &cert.state_bound {
        Ok(sb.r + sb.p.eval(h_bound)?)
    } else {
        Err(Error::Verification("output map is not the identity; a state bound |x| ≤ R + p(|H(x)|) is required to bound sublevel sets".into()))
    }
}

/// Samplers shared by the checks.
struct Sampler<'a> {
    model: &'a SystemModel,
    d_box: Vec<Interval>,
    d_corners: Vec<Vec<f64>>,
}

impl<'a> Sampler<'a> {
    fn new(model: &'a SystemModel) -> Result<Sampler<'a>> {
        if let Some(j) = model.d_box().iter().position(|b| !b.lo.is_finite() || !b.hi.is_finite()) {
            return Err(Error::Model(format!("disturbance box D[{}] must be bounded", j + 1)));
        }
        Ok(Sampler { model, d_box: model.d_box().to_vec(), d_corners: model.d_corners() })
    }

    fn draw_d(&self, rng: &mut ChaCha8Rng, out: &mut [f64]) {
        draw_disturbance(rng, &self.d_box, &self.d_corners, out);
    }

    fn draw_v(&self, rng: &mut ChaCha8Rng, radius: f64, out: &mut [f64]) {
        draw_ball(rng, radius, self.model.u_box(), out);
    }
}

/// A random corner of `D` with probability 1/2, otherwise a uniform point.
pub(crate) fn draw_disturbance(rng: &mut ChaCha8Rng, d_box: &[Interval], corners: &[Vec<f64>], out: &mut [f64]) {
    if rng.gen_bool(0.5) {
        out.copy_from_slice(&corners[rng.gen_range(0..corners.len())]);
    } else {
        for (o, b) in out.iter_mut().zip(d_box) {
            *o = if b.lo == b.hi { b.lo } else { rng.gen_range(b.lo..=b.hi) };
        }
    }
}

/// Point of the ball `|v| ≤ radius` clipped to `clip`; half of the draws
/// lie on the sphere.
pub(crate) fn draw_ball(rng: &mut ChaCha8Rng, radius: f64, clip: &[Interval], out: &mut [f64]) {
    let m = out.len();
    if m == 0 {
        return;
    }
    if radius > 0.0 {
        loop {
            for o in out.iter_mut() {
                *o = rng.gen_range(-1.0..=1.0);
            }
            let len = norm(out);
            if len > 1e-9 && len <= 1.0 {
                let mag = if rng.gen_bool(0.5) { radius } else { radius * rng.gen::<f64>().powf(1.0 / m as f64) };
                for o in out.iter_mut() {
                    *o *= mag / len;
                }
                break;
            }
        }
    } else {
        out.fill(0.0);
    }
    for (o, b) in out.iter_mut().zip(clip) {
        *o = o.clamp(b.lo, b.hi);
    }
}

pub(crate) fn draw_box(rng: &mut ChaCha8Rng, half: f64, out: &mut [f64]) {
    for o in out.iter_mut() {
        *o = if half > 0.0 { rng.gen_range(-half..=half) } else { 0.0 };
    }
}

/// Pulls `z` towards the feasible `anchor` until it is feasible.
pub(crate) fn bisect_towards(anchor: &[f64], z: &mut [f64], feasible: &mut dyn FnMut(&[f64]) -> Result<bool>) -> Result<()> {
    let mut lo = 0.0;
    let mut hi = 1.0;
    let target = z.to_vec();
    let mut cand = vec![0.0; z.len()];
    for _ in 0..BISECTION_STEPS {
        let mid = 0.5 * (lo + hi);
        for j in 0..z.len() {
            cand[j] = anchor[j] + mid * (target[j] - anchor[j]);
        }
        if feasible(&cand)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    for j in 0..z.len() {
        z[j] = anchor[j] + lo * (target[j] - anchor[j]);
    }
    Ok(())
}

/// Radius of the input ball `ζ(|v|) ≤ level`.
fn input_radius(cert: &LyapunovCertificate, model: &SystemModel, level: f64) -> Result<f64> {
    if model.m() == 0 || level <= 0.0 {
        return Ok(0.0);
    }
    match cert.zeta.inverse(level) {
        Ok(r) => Ok(r),
        Err(_) => {
            let corner = model.u_box().iter().map(|b| b.lo.abs().max(b.hi.abs())).collect::<Vec<_>>();
            let r = norm(&corner);
            if r.is_finite() {
                Ok(r)
            } else {
                Err(Error::Verification(format!("input ball zeta(|v|) <= {level} is unbounded and U is unbounded")))
            }
        }
    }
}

/// Numeric estimate of `b_i^g(x)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BEstimate {
    pub value: f64,
    pub samples: u64,
    /// Sublevel draws accepted without being pulled towards the origin.
    pub accepted: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub diagnostic: Option<String>,
}

struct BContext<'a> {
    cert: &'a LyapunovCertificate,
    prep: &'a Prepared,
    sampler: &'a Sampler<'a>,
}

impl BContext<'_> {
    fn estimate(&self, i: usize, x: &[f64], mc: usize, rng: &mut ChaCha8Rng) -> Result<BEstimate> {
        let model = self.sampler.model;
        let layout = model.layout();
        let n = model.n();
        let level = self.prep.vi(i, x)?;
        let mut buf = vec![0.0; layout.len()];
        let mut f = vec![0.0; n];
        let mut gg = vec![0.0; n];
        let mut eval = |xi: &[f64], x0: &[f64], d: &[f64], v: &[f64], v0: &[f64], buf: &mut Vec<f64>| -> Result<f64> {
            layout.pack(buf, xi, x0, d, v, v0);
            model.eval_f_packed(buf, &mut f)?;
            Prepared::grad(&self.prep.grad_g[i], xi, &mut gg)?;
            Ok(dot(&gg, &f).abs())
        };
        let zero_x = vec![0.0; n];
        let zero_v = vec![0.0; model.m()];
        let mut best: f64 = 0.0;
        let mut samples = 0u64;
        if !(level > 0.0) {
            for d in &self.sampler.d_corners {
                best = best.max(eval(&zero_x, &zero_x, d, &zero_v, &zero_v, &mut buf)?);
                samples += 1;
            }
            return Ok(BEstimate { value: best, samples, accepted: samples, diagnostic: Some("V_i(x) = 0: constraint sets reduce to the origin".into()) });
        }
        let a = &self.cert.a;
        let prep = self.prep;
        let mut feasible = |z: &[f64]| -> Result<bool> { Ok(a.eval(prep.vmax(z)?)? <= level * (1.0 + LEVEL_TOL)) };
        if !feasible(&zero_x)? {
            return Err(Error::Verification(format!("sublevel set {{a(V) <= {level}}} does not contain the origin")));
        }
        let radius = sublevel_radius(self.cert, model, level)?;
        let v_radius = input_radius(self.cert, model, level)?;
        for d in &self.sampler.d_corners {
            best = best.max(eval(&zero_x, &zero_x, d, &zero_v, &zero_v, &mut buf)?);
            samples += 1;
            if feasible(x)? {
                best = best.max(eval(x, x, d, &zero_v, &zero_v, &mut buf)?);
                samples += 1;
            }
        }
        let mut xi = vec![0.0; n];
        let mut x0 = vec![0.0; n];
        let mut d = vec![0.0; model.l()];
        let mut v = vec![0.0; model.m()];
        let mut v0 = vec![0.0; model.m()];
        let mut accepted = 0u64;
        for _ in 0..mc {
            for z in [&mut xi, &mut x0] {
                draw_box(rng, radius, z);
                if feasible(z)? {
                    accepted += 1;
                } else {
                    bisect_towards(&zero_x, z, &mut feasible)?;
                }
            }
            self.sampler.draw_d(rng, &mut d);
            self.sampler.draw_v(rng, v_radius, &mut v);
            self.sampler.draw_v(rng, v_radius, &mut v0);
            best = best.max(eval(&xi, &x0, &d, &v, &v0, &mut buf)?);
            samples += 1;
        }
        Ok(BEstimate { value: best, samples, accepted, diagnostic: None })
    }
}

/// Estimates `b_i^g(x)` with `mc` random draws from the stream `rng`.
pub fn b_bound(cert: &LyapunovCertificate, i: usize, x: &[f64], model: &SystemModel, mc: usize, rng: &mut ChaCha8Rng) -> Result<BEstimate> {
    if i >= cert.k() {
        return Err(Error::Input(format!("index {i} out of range for a family of {}", cert.k())));
    }
    let prep = Prepared::new(cert, model)?;
    let sampler = Sampler::new(model)?;
    BContext { cert, prep: &prep, sampler: &sampler }.estimate(i, x, mc, rng)
}

/// Estimates `b_i^g(x)` using the stream derived from `seed` and `x`'s grid
/// position `index`.
pub fn b_bound_seeded(cert: &LyapunovCertificate, i: usize, x: &[f64], model: &SystemModel, mc: usize, seed: u64, index: u64) -> Result<BEstimate> {
    b_bound(cert, i, x, model, mc, &mut stream(seed, PURPOSE_B + i as u64, index))
}

struct PointOutcome {
    tracker: MarginTracker,
    vacuous: bool,
}

struct DecreaseContext<'a> {
    cert: &'a LyapunovCertificate,
    prep: &'a Prepared,
    sampler: &'a Sampler<'a>,
    r: f64,
    mc: usize,
}

impl DecreaseContext<'_> {
    fn point(&self, i: usize, x: &[f64], rng: &mut ChaCha8Rng) -> Result<PointOutcome> {
        let model = self.sampler.model;
        let layout = model.layout();
        let n = model.n();
        let prep = self.prep;
        let vi = prep.vi(i, x)?;
        let vmax = prep.vmax(x)?;
        let a = &self.cert.a;
        let mut tracker = MarginTracker::default();
        if a.eval(vmax)? > vi * (1.0 + LEVEL_TOL) + f64::MIN_POSITIVE {
            return Ok(PointOutcome { tracker, vacuous: true });
        }
        let b = BContext { cert: self.cert, prep, sampler: self.sampler }.estimate(i, x, self.mc, rng)?.value;
        let slab = self.r * b;
        let rhs = match &prep.w {
            Some(w) => -w.eval(x)?,
            None => -self.cert.rho[i].eval(vi)?,
        };
        let mut grad = vec![0.0; n];
        Prepared::grad(&prep.grad_v[i], x, &mut grad)?;
        let gx = prep.g[i].eval(x)?;
        let mut feasible = |z: &[f64]| -> Result<bool> {
            Ok((prep.g[i].eval(z)? - gx).abs() <= slab * (1.0 + LEVEL_TOL) + 1e-300 && a.eval(prep.vmax(z)?)? <= vi * (1.0 + LEVEL_TOL))
        };
        let radius = sublevel_radius(self.cert, model, vi)?;
        let v_radius = input_radius(self.cert, model, vi)?;
        let mut buf = vec![0.0; layout.len()];
        let mut f = vec![0.0; n];
        let mut check = |x0: &[f64], d: &[f64], v: &[f64], v0: &[f64], tracker: &mut MarginTracker| -> Result<()> {
            layout.pack(&mut buf, x, x0, d, v, v0);
            model.eval_f_packed(&buf, &mut f)?;
            let lie = dot(&grad, &f);
            tracker.record(rhs - lie, rhs.abs() + lie.abs(), || Witness { x: x.to_vec(), x0: x0.to_vec(), d: d.to_vec(), v: v.to_vec(), v0: v0.to_vec() });
            Ok(())
        };
        let zero_v = vec![0.0; model.m()];
        for d in &self.sampler.d_corners {
            check(x, d, &zero_v, &zero_v, &mut tracker)?;
        }
        let mut x0 = vec![0.0; n];
        let mut d = vec![0.0; model.l()];
        let mut v = vec![0.0; model.m()];
        let mut v0 = vec![0.0; model.m()];
        let mut gg = vec![0.0; n];
        for _ in 0..self.mc {
            draw_box(rng, radius, &mut x0);
            // move onto the slab |g(x₀) − g(x)| ≤ r·b along ∇g
            let offset = prep.g[i].eval(&x0)? - gx;
            if offset.abs() > slab {
                let target = if rng.gen_bool(0.25) { rng.gen_range(-1.0..=1.0) * slab } else { offset.clamp(-slab, slab) };
                for _ in 0..4 {
                    let off = prep.g[i].eval(&x0)? - gx;
                    Prepared::grad(&prep.grad_g[i], &x0, &mut gg)?;
                    let g2 = dot(&gg, &gg);
                    if g2 == 0.0 || (off - target).abs() <= 1e-14 * (1.0 + target.abs()) {
                        break;
                    }
                    let step = (target - off) / g2;
                    for (z, gj) in x0.iter_mut().zip(&gg) {
                        *z += step * gj;
                    }
                }
            }
            if !feasible(&x0)? {
                bisect_towards(x, &mut x0, &mut feasible)?;
            }
            self.sampler.draw_d(rng, &mut d);
            self.sampler.draw_v(rng, v_radius, &mut v);
            self.sampler.draw_v(rng, v_radius, &mut v0);
            check(&x0, &d, &v, &v0, &mut tracker)?;
        }
        Ok(PointOutcome { tracker, vacuous: false })
    }
}

fn falsification_note() -> String {
    "falsification check: pass means no counterexample was found under the sampling budget".into()
}

/// Checks the decrease condition for every member of the family with the
/// held state ranging over `B_i^g(r, x)`.
pub fn decrease_check(cert: &LyapunovCertificate, model: &SystemModel, region: &Region, r: f64, budget: &SampleBudget) -> Result<Vec<VerificationReport>> {
    budget.validate()?;
    if !(r >= 0.0) || r > model.r() * (1.0 + 1e-12) {
        return Err(Error::Input(format!("r = {r} must lie in [0, {}]", model.r())));
    }
    if region.dim() != model.n() {
        return Err(Error::Input(format!("region has dimension {}, model has {}", region.dim(), model.n())));
    }
    let prep = Prepared::new(cert, model)?;
    let sampler = Sampler::new(model)?;
    let ctx = DecreaseContext { cert, prep: &prep, sampler: &sampler, r, mc: budget.mc_samples };
    let points = region.grid(budget.grid_per_axis);
    let mut reports = Vec::with_capacity(cert.k());
    for i in 0..cert.k() {
        let outcomes = points
            .par_iter()
            .enumerate()
            .map(|(j, x)| ctx.point(i, x, &mut stream(budget.seed, PURPOSE_DECREASE + i as u64, j as u64)))
            .collect::<Result<Vec<_>>>()?;
        let mut tracker = MarginTracker::default();
        let mut vacuous = 0usize;
        for o in outcomes {
            vacuous += o.vacuous as usize;
            tracker.merge(o.tracker);
        }
        let condition = if cert.is_single() { "decrease(W)".to_string() } else { format!("decrease[{}]", i + 1) };
        let notes = vec![
            format!("{} grid points, {vacuous} skipped where a(V(x)) > V_i(x)", points.len()),
            format!("held state drawn from B_i^g(r, x) with r = {r}, intersected with a(V(x0)) <= V_i(x)"),
            falsification_note(),
        ];
        reports.push(tracker.into_report(condition, *budget, notes));
    }
    Ok(reports)
}

/// Checks `a₁(|H(x)|) ≤ max_i V_i(x) ≤ a₂(|x|)` on the full region grid.
pub fn sandwich_check(cert: &LyapunovCertificate, model: &SystemModel, region: &Region, budget: &SampleBudget) -> Result<VerificationReport> {
    budget.validate()?;
    let prep = Prepared::new(cert, model)?;
    let mut tracker = MarginTracker::default();
    for x in region.grid_all(budget.grid_per_axis) {
        let v = prep.vmax(&x)?;
        let lower = cert.a1.eval(norm(&model.eval_output(&x)?))?;
        let upper = cert.a2.eval(norm(&x))?;
        let margin = (v - lower).min(upper - v);
        tracker.record(margin, v.abs() + upper.abs(), || Witness { x: x.clone(), ..Witness::default() });
    }
    Ok(tracker.into_report("sandwich", *budget, vec![falsification_note()]))
}

/// Checks `b_i^g(x) ≤ analytic_b_i(x)` for every member with an analytic bound.
pub fn analytic_b_check(cert: &LyapunovCertificate, model: &SystemModel, region: &Region, budget: &SampleBudget) -> Result<Vec<VerificationReport>> {
    budget.validate()?;
    let prep = Prepared::new(cert, model)?;
    let sampler = Sampler::new(model)?;
    let ctx = BContext { cert, prep: &prep, sampler: &sampler };
    let points = region.grid(budget.grid_per_axis);
    let mut reports = Vec::new();
    for i in 0..cert.k() {
        let Some(bound) = &prep.b[i] else { continue };
        let trackers = points
            .par_iter()
            .enumerate()
            .map(|(j, x)| -> Result<MarginTracker> {
                let mut t = MarginTracker::default();
                let est = ctx.estimate(i, x, budget.mc_samples, &mut stream(budget.seed, PURPOSE_B_CHECK + i as u64, j as u64))?;
                let analytic = bound.eval(x)?;
                t.record(analytic * (1.0 + 1e-9) - est.value, analytic.abs(), || Witness { x: x.clone(), ..Witness::default() });
                Ok(t)
            })
            .collect::<Result<Vec<_>>>()?;
        let mut tracker = MarginTracker::default();
        trackers.into_iter().for_each(|t| tracker.merge(t));
        reports.push(tracker.into_report(format!("analytic_b[{}]", i + 1), *budget, vec![falsification_note()]));
    }
    Ok(reports)
}

/// Optional candidate functions for (H2) and (H3).
#[derive(Clone, Debug, Default)]
pub struct HypothesisCandidates {
    /// `a` in `|f| ≤ a(|x| + |x₀| + |v| + |v₀|)`.
    pub growth: Option<ComparisonFunction>,
    pub state_bound: Option<StateBound>,
}

#[derive(Clone, Debug, Serialize)]
pub struct HypothesisReport {
    pub hypothesis: String,
    /// `candidate` when a user function was checked, `envelope` when only an
    /// empirical estimate is reported.
    pub mode: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub estimate: Option<f64>,
    pub report: VerificationReport,
}

/// Sampling box for inputs: `U` truncated to `[−scale, scale]`.
fn truncated(b: &[Interval], scale: f64) -> Vec<Interval> {
    b.iter().map(|i| Interval::new(i.lo.max(-scale), i.hi.min(scale))).collect()
}

fn draw_interval(rng: &mut ChaCha8Rng, b: &[Interval], out: &mut [f64]) {
    for (o, i) in out.iter_mut().zip(b) {
        *o = if i.lo == i.hi { i.lo } else { rng.gen_range(i.lo..=i.hi) };
    }
}

/// Sampled checks of the standing hypotheses (H1)–(H4) on `region`.
///
/// Inputs are drawn from `U` truncated to the largest half-width of the
/// region.
pub fn check_hypotheses(model: &SystemModel, region: &Region, budget: &SampleBudget, candidates: &HypothesisCandidates) -> Result<Vec<HypothesisReport>> {
    budget.validate()?;
    if region.dim() != model.n() {
        return Err(Error::Input(format!("region has dimension {}, model has {}", region.dim(), model.n())));
    }
    let n = model.n();
    let layout = model.layout();
    let sampler = Sampler::new(model)?;
    let scale = region.bounds.iter().map(|b| b.lo.abs().max(b.hi.abs())).fold(0.0, f64::max).max(1.0);
    let u_box = truncated(model.u_box(), scale);
    let mut rng = stream(budget.seed, PURPOSE_HYPOTHESES, 0);
    let pairs = budget.mc_samples.max(budget.grid_per_axis.pow(n.min(6) as u32));
    let mut out = Vec::new();

    let mut bx = vec![0.0; layout.len()];
    let mut by = vec![0.0; layout.len()];
    let (mut fx, mut fy) = (vec![0.0; n], vec![0.0; n]);
    let (mut x, mut y, mut x0) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let (mut d, mut v, mut v0) = (vec![0.0; model.l()], vec![0.0; model.m()], vec![0.0; model.m()]);

    // (H1): one-sided Lipschitz constant
    let mut lipschitz = f64::NEG_INFINITY;
    let mut samples = 0u64;
    for k in 0..pairs {
        draw_interval(&mut rng, &region.bounds, &mut x);
        draw_interval(&mut rng, &region.bounds, &mut x0);
        if k % 2 == 0 {
            draw_interval(&mut rng, &region.bounds, &mut y);
        } else {
            for (yj, xj) in y.iter_mut().zip(&x) {
                *yj = xj + 1e-3 * scale * rng.gen_range(-1.0..=1.0);
            }
        }
        sampler.draw_d(&mut rng, &mut d);
        draw_interval(&mut rng, &u_box, &mut v);
        draw_interval(&mut rng, &u_box, &mut v0);
        let diff: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a - b).collect();
        let dist2 = dot(&diff, &diff);
        if dist2 == 0.0 {
            continue;
        }
        layout.pack(&mut bx, &x, &x0, &d, &v, &v0);
        layout.pack(&mut by, &y, &x0, &d, &v, &v0);
        model.eval_f_packed(&bx, &mut fx)?;
        model.eval_f_packed(&by, &mut fy)?;
        let df: Vec<f64> = fx.iter().zip(&fy).map(|(a, b)| a - b).collect();
        lipschitz = lipschitz.max(dot(&diff, &df) / dist2);
        samples += 1;
    }
    let mut report = MarginTracker::default().into_report("H1", *budget, vec![format!("one-sided Lipschitz estimate over {samples} pairs")]);
    report.samples = samples;
    report.status = if lipschitz.is_finite() { crate::Status::Pass } else { crate::Status::Fail };
    out.push(HypothesisReport { hypothesis: "H1".into(), mode: "envelope".into(), estimate: Some(lipschitz.max(0.0)), report });

    // (H2): growth bound
    let mut tracker = MarginTracker::default();
    let mut envelope: f64 = 0.0;
    for _ in 0..pairs {
        draw_interval(&mut rng, &region.bounds, &mut x);
        draw_interval(&mut rng, &region.bounds, &mut x0);
        sampler.draw_d(&mut rng, &mut d);
        draw_interval(&mut rng, &u_box, &mut v);
        draw_interval(&mut rng, &u_box, &mut v0);
        layout.pack(&mut bx, &x, &x0, &d, &v, &v0);
        model.eval_f_packed(&bx, &mut fx)?;
        let arg = norm(&x) + norm(&x0) + norm(&v) + norm(&v0);
        let size = norm(&fx);
        if arg > 0.0 {
            envelope = envelope.max(size / arg);
        }
        if let Some(a) = &candidates.growth {
            let bound = a.eval(arg)?;
            tracker.record(bound - size, bound.abs() + size, || Witness { x: x.clone(), x0: x0.clone(), d: d.clone(), v: v.clone(), v0: v0.clone() });
        }
    }
    let (mode, mut report) = match &candidates.growth {
        Some(_) => ("candidate", tracker.into_report("H2", *budget, vec![falsification_note()])),
        None => ("envelope", MarginTracker::default().into_report("H2", *budget, vec!["no growth candidate supplied; reporting sup |f| / (|x|+|x0|+|v|+|v0|)".into()])),
    };
    report.samples = pairs as u64;
    out.push(HypothesisReport { hypothesis: "H2".into(), mode: mode.into(), estimate: Some(envelope), report });

    // (H3): |x| ≤ R + p(|H(x)|)
    let bound = match (&candidates.state_bound, model.output_is_identity()) {
        (Some(b), _) => Some(b.clone()),
        (None, true) => Some(StateBound { r: 0.0, p: ComparisonFunction::parse("s", FnClass::KInfinity)? }),
        (None, false) => None,
    };
    let mut tracker = MarginTracker::default();
    let mut excess: f64 = 0.0;
    for x in region.grid_all(budget.grid_per_axis) {
        let hx = norm(&model.eval_output(&x)?);
        excess = excess.max(norm(&x) - hx);
        if let Some(b) = &bound {
            let rhs = b.r + b.p.eval(hx)?;
            tracker.record(rhs - norm(&x), rhs.abs(), || Witness { x: x.clone(), ..Witness::default() });
        }
    }
    let (mode, report) = match bound {
        Some(_) => ("candidate", tracker.into_report("H3", *budget, vec![falsification_note()])),
        None => ("envelope", MarginTracker::default().into_report("H3", *budget, vec!["no state bound supplied; reporting sup (|x| - |H(x)|)".into()])),
    };
    out.push(HypothesisReport { hypothesis: "H3".into(), mode: mode.into(), estimate: Some(excess), report });

    // (H4): 0 < h(x) ≤ r
    let mut tracker = MarginTracker::default();
    for x in region.grid_all(budget.grid_per_axis) {
        let h = model.eval_h(&x)?;
        tracker.record(h.min(model.r() - h), model.r(), || Witness { x: x.clone(), ..Witness::default() });
        if h <= 0.0 {
            tracker.record(-f64::MIN_POSITIVE.max(-h), 1.0, || Witness { x: x.clone(), ..Witness::default() });
        }
    }
    out.push(HypothesisReport { hypothesis: "H4".into(), mode: "candidate".into(), estimate: None, report: tracker.into_report("H4", *budget, vec![falsification_note()]) });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar() -> (SystemModel, LyapunovCertificate) {
        let model = SystemModel::parse(1, &["-2*xs[1] + v[1]"], &["x[1]"], "0.1", 0.1, vec![], vec![Interval::unbounded()]).unwrap();
        let cert = LyapunovCertificate::new(
            1,
            vec![Expr::parse("x[1]^2/2").unwrap()],
            vec![ComparisonFunction::parse("s/2", FnClass::PositiveDefinite).unwrap()],
            ComparisonFunction::parse("s/2", FnClass::N).unwrap(),
            ComparisonFunction::parse("s^2", FnClass::N).unwrap(),
            ComparisonFunction::parse("s^2/2", FnClass::KInfinity).unwrap(),
            ComparisonFunction::parse("s^2/2", FnClass::KInfinity).unwrap(),
            vec![Expr::parse("x[1]").unwrap()],
        )
        .unwrap();
        (model, cert)
    }

    #[test]
    fn gradient_is_derived() {
        let (_, cert) = scalar();
        assert_eq!(cert.grad_v[0][0].eval(&crate::expr::Env::state(&[3.0])).unwrap(), 3.0);
        assert!(cert.validate(50).unwrap().passed());
    }

    #[test]
    fn scalar_b_matches_hand_bound() {
        // |f| = |−2x0 + v| with |x0| ≤ √2 and |v| ≤ 1/√2 at x = 1
        let (model, cert) = scalar();
        let est = b_bound_seeded(&cert, 0, &[1.0], &model, 20_000, 3, 0).unwrap();
        let exact = 2.0 * 2f64.sqrt() + 0.5f64.sqrt();
        assert!(est.value <= exact * (1.0 + 1e-9) && est.value >= 0.95 * exact, "{} vs {exact}", est.value);
    }

    #[test]
    fn b_at_origin_is_zero() {
        let (model, cert) = scalar();
        let est = b_bound_seeded(&cert, 0, &[0.0], &model, 100, 1, 0).unwrap();
        assert_eq!(est.value, 0.0);
        assert!(est.diagnostic.is_some());
    }

    #[test]
    fn sublevel_radius_uses_lower_bound() {
        let (model, cert) = scalar();
        // {x²/4 ≤ 1} ⊂ {|x| ≤ 2}
        assert!((sublevel_radius(&cert, &model, 1.0).unwrap() - 2.0).abs() < 1e-9);
        let other = SystemModel::parse(1, &["-x[1]"], &["x[1]^3"], "0.1", 0.1, vec![], vec![]).unwrap();
        assert!(sublevel_radius(&cert, &other, 1.0).is_err());
    }

    #[test]
    fn arguments_are_validated() {
        let (model, cert) = scalar();
        let region = Region::cube(1, 1.0);
        assert!(decrease_check(&cert, &model, &region, 0.5, &SampleBudget::new(5, 10, 0)).is_err());
        assert!(decrease_check(&cert, &model, &region, 0.05, &SampleBudget::new(0, 10, 0)).is_err());
        assert!(LyapunovCertificate::new(1, vec![Expr::parse("abs(x[1])").unwrap()], cert.rho.clone(), cert.a.clone(), cert.zeta.clone(), cert.a1.clone(), cert.a2.clone(), cert.g.clone()).is_err());
        assert!(cert.clone().with_w(Expr::parse("d[1]").unwrap()).is_err());
    }

    #[test]
    fn scalar_decrease_small_r() {
        let (model, cert) = scalar();
        let model = model.with_constant_sampling(0.01).unwrap();
        let reports = decrease_check(&cert, &model, &Region::new(vec![Interval::symmetric(3.0)], 0.0).unwrap(), 0.01, &SampleBudget::new(11, 300, 5)).unwrap();
        assert!(reports[0].passed(), "{:?}", reports[0]);
    }
}
