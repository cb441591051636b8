//! Emulation checks for feedback designed on lower-triangular systems
//!
//! `ẋ_i = Σ_{j≤i} x_j φ_{i,j}(x_1..x_i, d) + g_i(x_1..x_i, d) x_{i+1}`,
//! with `u` in place of `x_{n+1}`: the dissipation inequality of the
//! continuous-time design, the growth bound `ρ(x)` of the closed loop over
//! the Razumikhin sublevel set, the resulting sampling period `h` with
//! `ζ(h ρ(x)) ≤ V(x)`, and the planar hypothesis (P).

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::comparison::ComparisonFunction;
use crate::expr::{build, Compiled, Expr, Role, Var};
use crate::model::{box_corners, compile_state_fn, Interval, Region, SystemModel};
use crate::report::{MarginTracker, SampleBudget, Status, VerificationReport, Witness};
use crate::rng::stream;
use crate::verify::{bisect_towards, draw_ball, draw_box, draw_disturbance, norm};
use crate::{Error, Result};

const PURPOSE_DISSIPATION: u64 = 0x500;
const PURPOSE_RHO: u64 = 0x600;
const PURPOSE_P: u64 = 0x700;
const LEVEL_TOL: f64 = 1e-12;

/// Lower-triangular system; `phi[i]` holds `φ_{i+1,1..i+1}`.
#[derive(Clone, Debug)]
pub struct TriangularSystem {
    pub n: usize,
    pub phi: Vec<Vec<Expr>>,
    pub g: Vec<Expr>,
    pub d_box: Vec<Interval>,
    f_drift: Vec<Expr>,
    f_compiled: Vec<Compiled>,
    gn_compiled: Compiled,
}

fn compile_xd(e: &Expr, n: usize, l: usize) -> Result<Compiled> {
    let slot = |v: &Var| match (v.role(), v.index()) {
        (Role::X, Some(i)) if i >= 1 && i <= n => Some(i - 1),
        (Role::D, Some(j)) if j >= 1 && j <= l => Some(n + j - 1),
        _ => None,
    };
    Compiled::new(e, &slot).map_err(|err| Error::Model(format!("`{e}`: {err}")))
}

impl TriangularSystem {
    pub fn new(phi: Vec<Vec<Expr>>, g: Vec<Expr>, d_box: Vec<Interval>) -> Result<TriangularSystem> {
        let n = g.len();
        if n == 0 || phi.len() != n {
            return Err(Error::Model(format!("need n rows of phi and n gains, got {} and {n}", phi.len())));
        }
        let l = d_box.len();
        for (i, row) in phi.iter().enumerate() {
            if row.len() != i + 1 {
                return Err(Error::Model(format!("phi row {} must have {} entries", i + 1, i + 1)));
            }
            for e in row.iter().chain(std::iter::once(&g[i])) {
                if let Some(bad) = e.variables().into_iter().find(|v| match (v.role(), v.index()) {
                    (Role::X, Some(j)) => j == 0 || j > i + 1,
                    (Role::D, Some(j)) => j == 0 || j > l,
                    _ => true,
                }) {
                    return Err(Error::Model(format!("row {} uses `{bad}`; only x[1..{}] and d are allowed", i + 1, i + 1)));
                }
            }
        }
        let mut f_drift = Vec::with_capacity(n);
        for i in 0..n {
            let mut e = Expr::num(0.0);
            for (j, p) in phi[i].iter().enumerate() {
                e = build::add(e, build::mul(Expr::var("x", j + 1), p.clone()));
            }
            if i + 1 < n {
                e = build::add(e, build::mul(g[i].clone(), Expr::var("x", i + 2)));
            }
            f_drift.push(e);
        }
        let f_compiled = f_drift.iter().map(|e| compile_xd(e, n, l)).collect::<Result<Vec<_>>>()?;
        let gn_compiled = compile_xd(&g[n - 1], n, l)?;
        Ok(TriangularSystem { n, phi, g, d_box, f_drift, f_compiled, gn_compiled })
    }

    /// The drift `F(x, d)`.
    pub fn drift(&self) -> &[Expr] {
        &self.f_drift
    }

    /// `F(x, d) + G(x, d)·u` into `out`.
    fn eval(&self, x: &[f64], d: &[f64], u: f64, buf: &mut Vec<f64>, out: &mut [f64]) -> Result<()> {
        buf.clear();
        buf.extend_from_slice(x);
        buf.extend_from_slice(d);
        for (o, c) in out.iter_mut().zip(&self.f_compiled) {
            *o = c.eval(buf)?;
        }
        out[self.n - 1] += self.gn_compiled.eval(buf)? * u;
        Ok(())
    }

    /// Sampled check of `g_i(x, d) > 0`.
    pub fn check_gains(&self, region: &Region, grid_per_axis: usize) -> Result<VerificationReport> {
        let mut tracker = MarginTracker::default();
        let corners = box_corners(&self.d_box);
        let l = self.d_box.len();
        for x in region.grid_all(grid_per_axis) {
            for d in &corners {
                let mut buf = x.clone();
                buf.extend_from_slice(d);
                for gi in &self.g {
                    let value = compile_xd(gi, self.n, l)?.eval(&buf)?;
                    let margin = if value > 0.0 { value } else { value - f64::MIN_POSITIVE - 1.0 };
                    tracker.record(margin, 0.0, || Witness { x: x.clone(), d: d.clone(), ..Witness::default() });
                }
            }
        }
        Ok(tracker.into_report("g_i > 0", SampleBudget::new(grid_per_axis, 1, 0), vec![]))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    /// `ζ(|e|) ≤ V(x) ⇒ ∇V·(F + G k(x + e)) ≤ −W(x)`.
    MeasurementError,
    /// `ζ(|v|) ≤ V(x) ⇒ ∇V·(F + G k(x) + G v) ≤ −W(x)`, with `k ∈ C¹`.
    ActuatorError,
}

/// User-supplied backstepping design. `a1` is a lower bound
/// `a₁(|x|) ≤ V(x)` used to bound sublevel sets.
#[derive(Clone, Debug)]
pub struct BackstepCertificate {
    pub v: Expr,
    pub k: Expr,
    pub w: Expr,
    pub zeta: ComparisonFunction,
    pub a: ComparisonFunction,
    pub a1: ComparisonFunction,
    pub variant: Variant,
    grad_v: Vec<Expr>,
    grad_k: Option<Vec<Expr>>,
}

impl BackstepCertificate {
    #[allow(clippy::too_many_arguments)]
    pub fn new(n: usize, v: Expr, k: Expr, w: Expr, zeta: ComparisonFunction, a: ComparisonFunction, a1: ComparisonFunction, variant: Variant) -> Result<Self> {
        for (name, e) in [("V", &v), ("k", &k), ("W", &w)] {
            compile_state_fn(e, n).map_err(|err| Error::Model(format!("{name}: {err}")))?;
        }
        let zero = vec![0.0; n];
        let k0 = compile_state_fn(&k, n)?.eval(&zero)?;
        if k0.abs() > 1e-12 {
            return Err(Error::Model(format!("k(0) = {k0}, feedback must vanish at the origin")));
        }
        let grad_v = v.gradient("x", n).map_err(|err| Error::Model(format!("gradient of V: {err}")))?;
        let grad_k = match variant {
            Variant::MeasurementError => None,
            Variant::ActuatorError => Some(k.gradient("x", n).map_err(|err| Error::Model(format!("the actuator-error variant needs k to be continuously differentiable: {err}")))?),
        };
        Ok(BackstepCertificate { v, k, w, zeta, a, a1, variant, grad_v, grad_k })
    }
}

struct Prepared<'a> {
    tri: &'a TriangularSystem,
    cert: &'a BackstepCertificate,
    v: Compiled,
    k: Compiled,
    w: Compiled,
    grad_v: Vec<Compiled>,
    grad_k: Option<Vec<Compiled>>,
    corners: Vec<Vec<f64>>,
}

impl<'a> Prepared<'a> {
    fn new(tri: &'a TriangularSystem, cert: &'a BackstepCertificate) -> Result<Prepared<'a>> {
        let n = tri.n;
        if tri.d_box.iter().any(|b| !b.lo.is_finite() || !b.hi.is_finite()) {
            return Err(Error::Model("disturbance box must be bounded".into()));
        }
        let compile_all = |es: &[Expr]| es.iter().map(|e| compile_state_fn(e, n)).collect::<Result<Vec<_>>>();
        Ok(Prepared {
            tri,
            cert,
            v: compile_state_fn(&cert.v, n)?,
            k: compile_state_fn(&cert.k, n)?,
            w: compile_state_fn(&cert.w, n)?,
            grad_v: compile_all(&cert.grad_v)?,
            grad_k: cert.grad_k.as_deref().map(compile_all).transpose()?,
            corners: box_corners(&tri.d_box),
        })
    }

    fn sublevel_radius(&self, level: f64) -> Result<f64> {
        if level <= 0.0 {
            return Ok(0.0);
        }
        let v_level = self.cert.a.inverse(level).map_err(|e| Error::Verification(format!("sublevel set at {level} is unbounded: {e}")))?;
        Ok(self.cert.a1.inverse(v_level)?)
    }

    fn rho(&self, x: &[f64], mc: usize, rng: &mut ChaCha8Rng) -> Result<f64> {
        let n = self.tri.n;
        let level = self.v.eval(x)?;
        let a = &self.cert.a;
        let vfun = &self.v;
        let mut feasible = |z: &[f64]| -> Result<bool> { Ok(a.eval(vfun.eval(z)?)? <= level * (1.0 + LEVEL_TOL)) };
        let zero = vec![0.0; n];
        let mut buf = Vec::with_capacity(n + self.tri.d_box.len());
        let mut f = vec![0.0; n];
        let mut gk = vec![0.0; n];
        let mut value = |xi: &[f64], x0: &[f64], d: &[f64]| -> Result<f64> {
            self.tri.eval(xi, d, self.k.eval(x0)?, &mut buf, &mut f)?;
            Ok(match &self.grad_k {
                None => norm(&f),
                Some(grad) => {
                    for (o, c) in gk.iter_mut().zip(grad) {
                        *o = c.eval(xi)?;
                    }
                    gk.iter().zip(&f).map(|(p, q)| p * q).sum::<f64>().abs()
                }
            })
        };
        let mut best: f64 = 0.0;
        for d in &self.corners {
            best = best.max(value(&zero, &zero, d)?);
        }
        if !(level > 0.0) {
            return Ok(best);
        }
        if !feasible(&zero)? {
            return Err(Error::Verification("sublevel set does not contain the origin".into()));
        }
        let radius = self.sublevel_radius(level)?;
        let (mut xi, mut x0, mut d) = (vec![0.0; n], vec![0.0; n], vec![0.0; self.tri.d_box.len()]);
        for _ in 0..mc {
            for z in [&mut xi, &mut x0] {
                draw_box(rng, radius, z);
                if !feasible(z)? {
                    bisect_towards(&zero, z, &mut feasible)?;
                }
            }
            draw_disturbance(rng, &self.tri.d_box, &self.corners, &mut d);
            best = best.max(value(&xi, &x0, &d)?);
        }
        Ok(best)
    }
}

/// Checks the dissipation inequality of the selected variant on the grid.
pub fn check_dissipation(tri: &TriangularSystem, cert: &BackstepCertificate, region: &Region, budget: &SampleBudget) -> Result<VerificationReport> {
    budget.validate()?;
    let p = Prepared::new(tri, cert)?;
    let n = tri.n;
    let points = region.grid(budget.grid_per_axis);
    let trackers = points
        .par_iter()
        .enumerate()
        .map(|(j, x)| -> Result<MarginTracker> {
            let mut rng = stream(budget.seed, PURPOSE_DISSIPATION, j as u64);
            let mut t = MarginTracker::default();
            let vx = p.v.eval(x)?;
            let wx = p.w.eval(x)?;
            let grad = p.grad_v.iter().map(|c| c.eval(x)).collect::<std::result::Result<Vec<_>, _>>()?;
            let radius = if vx > 0.0 { cert.zeta.inverse(vx)? } else { 0.0 };
            let mut buf = Vec::new();
            let mut f = vec![0.0; n];
            let dim = match cert.variant {
                Variant::MeasurementError => n,
                Variant::ActuatorError => 1,
            };
            let clip = vec![Interval::unbounded(); dim];
            let mut e = vec![0.0; dim];
            let mut d = vec![0.0; tri.d_box.len()];
            let mut shifted = vec![0.0; n];
            for s in 0..=budget.mc_samples {
                if s == 0 {
                    d.copy_from_slice(&p.corners[0]);
                    e.fill(0.0);
                } else {
                    draw_disturbance(&mut rng, &tri.d_box, &p.corners, &mut d);
                    draw_ball(&mut rng, radius, &clip, &mut e);
                }
                let u = match cert.variant {
                    Variant::MeasurementError => {
                        for i in 0..n {
                            shifted[i] = x[i] + e[i];
                        }
                        p.k.eval(&shifted)?
                    }
                    Variant::ActuatorError => p.k.eval(x)? + e[0],
                };
                tri.eval(x, &d, u, &mut buf, &mut f)?;
                let lie: f64 = grad.iter().zip(&f).map(|(a, b)| a * b).sum();
                t.record(-wx - lie, wx.abs() + lie.abs(), || {
                    let (x0, v) = match cert.variant {
                        Variant::MeasurementError => (e.iter().zip(x).map(|(a, b)| a + b).collect(), vec![]),
                        Variant::ActuatorError => (vec![], e.clone()),
                    };
                    Witness { x: x.clone(), x0, d: d.clone(), v, v0: vec![] }
                });
            }
            Ok(t)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut tracker = MarginTracker::default();
    trackers.into_iter().for_each(|t| tracker.merge(t));
    let name = match cert.variant {
        Variant::MeasurementError => "dissipation(measurement-error)",
        Variant::ActuatorError => "dissipation(actuator-error)",
    };
    Ok(tracker.into_report(name, *budget, vec!["for the measurement-error variant the witness x0 holds x + e".into()]))
}

/// Estimate of `ρ(x)` from `budget.mc_samples` draws of the stream keyed
/// by `index`.
pub fn rho_x(tri: &TriangularSystem, cert: &BackstepCertificate, x: &[f64], budget: &SampleBudget, index: u64) -> Result<f64> {
    let p = Prepared::new(tri, cert)?;
    p.rho(x, budget.mc_samples, &mut stream(budget.seed, PURPOSE_RHO, index))
}

/// Largest sampling period admitted at one point.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PointPeriod {
    pub x: Vec<f64>,
    pub rho: f64,
    pub h: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FindHResult {
    /// Largest `h` with `ζ(h ρ(x)) ≤ V(x)` at every grid point; zero when an
    /// obstruction at the origin was detected.
    pub h_star: f64,
    pub status: Status,
    /// Grid point where `h_star` is attained.
    pub limiting: Option<PointPeriod>,
    /// Point near the origin where the admissible period collapses.
    pub obstruction: Option<PointPeriod>,
    /// Smallest admissible period along the origin probe rays, per radius.
    pub origin_probe: Vec<(f64, f64)>,
    pub region: Region,
    pub samples: u64,
    pub notes: Vec<String>,
}

/// Radii of the origin probe.
pub const ORIGIN_PROBE_RADII: [f64; 6] = [1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6];

fn admissible_h(p: &Prepared, x: &[f64], mc: usize, rng: &mut ChaCha8Rng) -> Result<PointPeriod> {
    let vx = p.v.eval(x)?;
    let rho = p.rho(x, mc, rng)?;
    let h = if rho <= 0.0 { f64::INFINITY } else { p.cert.zeta.inverse(vx)? / rho };
    Ok(PointPeriod { x: x.to_vec(), rho, h })
}

/// Finds the largest `h` with `ζ(h ρ(x)) ≤ V(x)` on the region grid, and
/// probes the origin along the coordinate axes and diagonals.
pub fn find_h(tri: &TriangularSystem, cert: &BackstepCertificate, region: &Region, budget: &SampleBudget) -> Result<FindHResult> {
    budget.validate()?;
    let p = Prepared::new(tri, cert)?;
    let n = tri.n;
    let points = region.grid(budget.grid_per_axis);
    let periods = points
        .par_iter()
        .enumerate()
        .filter(|(_, x)| norm(x) > 0.0)
        .map(|(j, x)| admissible_h(&p, x, budget.mc_samples, &mut stream(budget.seed, PURPOSE_RHO, j as u64)))
        .collect::<Result<Vec<_>>>()?;
    let limiting = periods.iter().min_by(|a, b| a.h.total_cmp(&b.h)).cloned();

    let mut directions: Vec<Vec<f64>> = Vec::new();
    for i in 0..n {
        for sign in [1.0, -1.0] {
            let mut e = vec![0.0; n];
            e[i] = sign;
            directions.push(e);
        }
    }
    if n > 1 {
        for sign in [1.0, -1.0] {
            directions.push(vec![sign / (n as f64).sqrt(); n]);
        }
    }
    let mut origin_probe = Vec::new();
    let mut last_ray_points = Vec::new();
    for (k, &radius) in ORIGIN_PROBE_RADII.iter().enumerate() {
        let mut worst: Option<PointPeriod> = None;
        for (q, dir) in directions.iter().enumerate() {
            let x: Vec<f64> = dir.iter().map(|c| c * radius).collect();
            let pp = admissible_h(&p, &x, budget.mc_samples, &mut stream(budget.seed, PURPOSE_RHO + 1, (k * directions.len() + q) as u64))?;
            if worst.as_ref().is_none_or(|w| pp.h < w.h) {
                worst = Some(pp);
            }
        }
        let worst = worst.expect("at least one direction");
        origin_probe.push((radius, worst.h));
        last_ray_points.push(worst);
    }
    let outer = origin_probe[0].1;
    let inner = origin_probe[origin_probe.len() - 1].1;
    let collapsing = origin_probe.windows(2).all(|w| w[1].1 <= w[0].1 * (1.0 + 1e-9)) && inner < 1e-2 * outer;
    let mut notes = vec![format!("condition checked on the region grid plus an origin probe at radii {:?}", ORIGIN_PROBE_RADII)];
    let samples = (periods.len() + origin_probe.len() * directions.len()) as u64 * budget.mc_samples as u64;
    if collapsing || !(inner > 0.0) {
        notes.push("admissible period collapses towards the origin; no positive h satisfies the condition".into());
        return Ok(FindHResult { h_star: 0.0, status: Status::Fail, limiting, obstruction: last_ray_points.pop(), origin_probe, region: region.clone(), samples, notes });
    }
    let probe_min = origin_probe.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    let grid_min = limiting.as_ref().map_or(f64::INFINITY, |l| l.h);
    let h_star = grid_min.min(probe_min);
    if !h_star.is_finite() {
        return Err(Error::Verification("rho vanishes everywhere; the sampling period is unconstrained".into()));
    }
    Ok(FindHResult { h_star, status: Status::Pass, limiting, obstruction: None, origin_probe, region: region.clone(), samples, notes })
}

/// The emulated loop `ẋ = F(x, d) + G(x, d) k(x(τ_i))` with constant
/// sampling period `h`.
pub fn closed_loop(tri: &TriangularSystem, cert: &BackstepCertificate, h: f64) -> Result<SystemModel> {
    let n = tri.n;
    let held = cert.k.substitute(&|v| (v.role() == Role::X).then(|| Expr::Var(Var::indexed("xs", v.index().unwrap()))));
    let mut f = tri.f_drift.clone();
    f[n - 1] = build::add(f[n - 1].clone(), build::mul(tri.g[n - 1].clone(), held));
    let output = (1..=n).map(|i| Expr::var("x", i)).collect();
    SystemModel::new(n, f, output, Expr::num(h), h, tri.d_box.clone(), vec![])
}

/// Constants of hypothesis (P) for a planar system `ẋ₁ = f₁`, `ẋ₂ = f₂ + u`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct HypothesisP {
    pub c: f64,
    pub a: f64,
    pub l: f64,
    pub gamma: f64,
}

/// Checks both parts of hypothesis (P): the strict inequality
/// `max x₁ f₁(x₁, −a x₁ + ξ, d) < 0` over `|ξ| ≤ c|x₁|` on the `x1_range`
/// grid, and the quadratic bound on the `z_range` grid.
pub fn check_hypothesis_p(f1: &Expr, f2: &Expr, d_box: &[Interval], p: HypothesisP, x1_range: Interval, z_range: Interval, budget: &SampleBudget) -> Result<Vec<VerificationReport>> {
    budget.validate()?;
    if !(p.c > 1.0) || p.l < 0.0 || p.gamma < 0.0 {
        return Err(Error::Input("hypothesis (P) needs c > 1 and L, gamma >= 0".into()));
    }
    let l = d_box.len();
    let c1 = compile_xd(f1, 2, l)?;
    let c2 = compile_xd(f2, 2, l)?;
    let corners = box_corners(d_box);
    let eval = |c: &Compiled, x1: f64, x2: f64, d: &[f64], buf: &mut Vec<f64>| -> Result<f64> {
        buf.clear();
        buf.extend_from_slice(&[x1, x2]);
        buf.extend_from_slice(d);
        Ok(c.eval(buf)?)
    };
    let k = budget.grid_per_axis.max(2);
    let mc = budget.mc_samples;

    // (a)
    let mut tracker = MarginTracker::default();
    let mut buf = Vec::new();
    let mut d = vec![0.0; l];
    for (j, x1) in x1_range.linspace(k).into_iter().enumerate() {
        if x1 == 0.0 {
            continue;
        }
        let mut rng = stream(budget.seed, PURPOSE_P, j as u64);
        let span = p.c * x1.abs();
        let mut worst = f64::NEG_INFINITY;
        let mut arg = (0.0, vec![]);
        for s in 0..mc + 2 * corners.len() {
            let xi = match s {
                s if s < corners.len() => -span,
                s if s < 2 * corners.len() => span,
                _ => rng.gen_range(-span..=span),
            };
            if s < 2 * corners.len() {
                d.copy_from_slice(&corners[s % corners.len()]);
            } else {
                draw_disturbance(&mut rng, d_box, &corners, &mut d);
            }
            let value = x1 * eval(&c1, x1, -p.a * x1 + xi, &d, &mut buf)?;
            if value > worst {
                worst = value;
                arg = (xi, d.clone());
            }
        }
        let violated = worst >= 0.0;
        let margin = if violated { -worst.abs().max(f64::MIN_POSITIVE) - 1e-9 } else { -worst };
        tracker.record(margin, 0.0, || Witness { x: vec![x1, -p.a * x1 + arg.0], d: arg.1.clone(), ..Witness::default() });
    }
    let first = tracker.into_report("P(a)", *budget, vec![format!("x1 grid of {k} points on [{}, {}]", x1_range.lo, x1_range.hi)]);

    // (b)
    let mut tracker = MarginTracker::default();
    for (j, z) in z_range.linspace(k).into_iter().enumerate() {
        let mut rng = stream(budget.seed, PURPOSE_P + 1, j as u64);
        let span = p.c * z.abs();
        let mut term1: f64 = 0.0;
        let mut term2 = f64::NEG_INFINITY;
        let side = (mc as f64).sqrt().ceil().max(2.0) as usize;
        let ticks = Interval::symmetric(span).linspace(side);
        for &x1 in &ticks {
            for &xi in &ticks {
                for dc in &corners {
                    let x2 = -p.a * x1 + xi;
                    term1 = term1.max((eval(&c2, x1, x2, dc, &mut buf)? + p.a * eval(&c1, x1, x2, dc, &mut buf)?).abs());
                }
            }
            for dc in &corners {
                let x2 = -p.a * x1 + z;
                term2 = term2.max(z * eval(&c2, x1, x2, dc, &mut buf)? + p.a * z * eval(&c1, x1, x2, dc, &mut buf)?);
            }
        }
        for _ in 0..mc {
            let (x1, xi) = (rng.gen_range(-span..=span), rng.gen_range(-span..=span));
            draw_disturbance(&mut rng, d_box, &corners, &mut d);
            let x2 = -p.a * x1 + xi;
            term1 = term1.max((eval(&c2, x1, x2, &d, &mut buf)? + p.a * eval(&c1, x1, x2, &d, &mut buf)?).abs());
            let x2 = -p.a * x1 + z;
            term2 = term2.max(z * eval(&c2, x1, x2, &d, &mut buf)? + p.a * z * eval(&c1, x1, x2, &d, &mut buf)?);
        }
        let lhs = z.abs() * term1 + p.l * term2;
        let rhs = p.gamma * z * z;
        tracker.record(rhs - lhs, rhs.abs() + lhs.abs(), || Witness { x: vec![z], ..Witness::default() });
    }
    let second = tracker.into_report("P(b)", *budget, vec![format!("z grid of {k} points on [{}, {}]", z_range.lo, z_range.hi)]);
    let mut reports = vec![first, second];
    for r in &mut reports {
        r.notes.push("falsification check: pass means no counterexample was found under the sampling budget".into());
    }
    Ok(reports)
}
