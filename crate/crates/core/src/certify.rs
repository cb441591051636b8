//! Trajectory-based checks of the stability estimates: the Lyapunov
//! envelope along solutions, Monte Carlo gain estimates and exponential
//! fits of the transient term.
//!
//! Monte Carlo runs can only falsify an estimate; a pass means no violating
//! run was found.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::comparison::{compose_gain, KLFunction};
use crate::model::{compile_state_fn, SystemModel};
use crate::report::{MarginTracker, SampleBudget, VerificationReport, Witness};
use crate::rng::stream;
use crate::signal::Signal;
use crate::sim::{simulate, Inputs, IntegratorConfig};
use crate::trajectory::{Termination, Trajectory};
use crate::verify::{norm, LyapunovCertificate};
use crate::{Error, Result};

const PURPOSE_GAIN: u64 = 0x800;

/// Absolute tolerance added to `γ(v̄)` in the gain check.
pub const GAIN_TOL: f64 = 1e-3;

/// Envelope check result; `violation_time` is the first stored time at
/// which the envelope was exceeded.
#[derive(Clone, Debug, Serialize)]
pub struct EnvelopeReport {
    pub report: VerificationReport,
    pub violation_time: Option<f64>,
}

/// Checks `V(x(t)) ≤ max{V(x(0)), sup_{s≤t} ζ(|v(s)|)} + tol` at every
/// stored time, with `V = max_i V_i`.
pub fn envelope_check(traj: &Trajectory, cert: &LyapunovCertificate, v: &Signal, tol: f64) -> Result<EnvelopeReport> {
    if !traj.completed() {
        return Err(Error::Input("envelope check needs a completed trajectory".into()));
    }
    if traj.n() != cert.n {
        return Err(Error::Input(format!("trajectory has n = {} but the certificate n = {}", traj.n(), cert.n)));
    }
    let vs = cert.v.iter().map(|e| compile_state_fn(e, cert.n)).collect::<Result<Vec<_>>>()?;
    let vmax = |x: &[f64]| -> Result<f64> { vs.iter().try_fold(f64::NEG_INFINITY, |m, c| Ok(m.max(c.eval(x)?))) };
    let v0 = vmax(&traj.states[0])?;
    let t0 = traj.times[0];
    let mut sup_v = v.sup_norm(t0, t0)?;
    let mut tracker = MarginTracker::default();
    let mut violation_time = None;
    for (k, (t, x)) in traj.times.iter().zip(&traj.states).enumerate() {
        if k > 0 {
            sup_v = sup_v.max(v.sup_norm(traj.times[k - 1], *t)?);
        }
        let bound = v0.max(cert.zeta.eval(sup_v)?);
        let value = vmax(x)?;
        let margin = bound + tol - value;
        if margin < 0.0 && violation_time.is_none() {
            violation_time = Some(*t);
        }
        tracker.record(margin, 0.0, || Witness { x: x.clone(), v: vec![sup_v], ..Witness::default() });
    }
    let budget = SampleBudget::new(1, 1, 0);
    let mut notes = vec![format!("tolerance {tol:e} on V")];
    if let Some(t) = violation_time {
        notes.push(format!("envelope first exceeded at t = {t}"));
    }
    Ok(EnvelopeReport { report: tracker.into_report("envelope", budget, notes), violation_time })
}

/// Monte Carlo setup of the gain check.
#[derive(Clone, Debug, Serialize)]
pub struct GainConfig {
    pub runs: usize,
    pub seed: u64,
    pub t_final: f64,
    /// Start of the tail window; the last third of the horizon when unset.
    pub t_tail: Option<f64>,
    /// Dwell of the random piecewise-constant `v`, `d` and `d̃`.
    pub dwell: f64,
    /// `d̃` takes values in `[0, dtilde_amplitude]`.
    pub dtilde_amplitude: f64,
    /// Initial states are drawn on the sphere of this radius.
    pub x0_radius: f64,
    pub max_step: Option<f64>,
}

impl GainConfig {
    pub fn new(runs: usize, seed: u64, t_final: f64) -> GainConfig {
        GainConfig { runs, seed, t_final, t_tail: None, dwell: 0.3, dtilde_amplitude: 0.0, x0_radius: 3.0, max_step: None }
    }

    pub fn tail_start(&self) -> f64 {
        self.t_tail.unwrap_or(2.0 * self.t_final / 3.0)
    }
}

/// A run that broke the declared gain or blew up.
#[derive(Clone, Debug, Serialize)]
pub struct GainFailure {
    pub amplitude: f64,
    pub run: usize,
    pub x0: Vec<f64>,
    pub tail_sup: f64,
    pub bound: f64,
    pub blow_up: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct GainEstimate {
    pub amplitudes: Vec<f64>,
    /// Largest `sup_{t ≥ T_tail} |H(x(t))|` over the runs, per amplitude.
    pub ultimate_bounds: Vec<f64>,
    /// `γ(v̄) = a₁⁻¹(ζ(v̄))` per amplitude.
    pub gamma_bounds: Vec<f64>,
    /// Least-squares slope through the origin of the ultimate bounds.
    pub k_hat: f64,
    /// Largest `γ(v̄)/v̄` over the positive amplitudes.
    pub declared_slope: Option<f64>,
    /// Ultimate bounds are nondecreasing in `v̄`.
    pub monotone: bool,
    pub passed: bool,
    pub failures: Vec<GainFailure>,
    pub runs: usize,
    pub t_tail: f64,
    pub dtilde_amplitude: f64,
    pub notes: Vec<String>,
}

impl GainEstimate {
    /// Rows `(amplitude, tail_sup, gamma_bound)`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("amplitude,tail_sup,gamma_bound\n");
        for ((a, u), g) in self.amplitudes.iter().zip(&self.ultimate_bounds).zip(&self.gamma_bounds) {
            out.push_str(&format!("{a},{u},{g}\n"));
        }
        out
    }
}

fn sphere_point(rng: &mut ChaCha8Rng, radius: f64, dim: usize) -> Vec<f64> {
    if dim == 0 {
        return Vec::new();
    }
    loop {
        let z: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..=1.0)).collect();
        let len = norm(&z);
        if len > 1e-6 && len <= 1.0 {
            return z.into_iter().map(|c| c * radius / len).collect();
        }
    }
}

fn random_inputs(model: &SystemModel, amplitude: f64, cfg: &GainConfig, rng: &mut ChaCha8Rng) -> Result<Inputs> {
    let horizon = cfg.t_final + cfg.dwell;
    let d_box = model.d_box().to_vec();
    let u_box = model.u_box().to_vec();
    let m = model.m();
    let d = Signal::random_piecewise(horizon, cfg.dwell, rng, |rng| {
        d_box.iter().map(|b| if b.lo == b.hi { b.lo } else { rng.gen_range(b.lo..=b.hi) }).collect()
    })?;
    let v = if amplitude > 0.0 && m > 0 {
        Signal::random_piecewise(horizon, cfg.dwell, rng, |rng| {
            sphere_point(rng, amplitude, m).into_iter().zip(&u_box).map(|(c, b)| c.clamp(b.lo, b.hi)).collect()
        })?
    } else {
        Signal::zero(m)
    };
    let dtilde = if cfg.dtilde_amplitude > 0.0 {
        let amp = cfg.dtilde_amplitude;
        Signal::random_piecewise(horizon, cfg.dwell, rng, |rng| vec![rng.gen_range(0.0..=amp)])?
    } else {
        Signal::zero(1)
    };
    Ok(Inputs { d, v, dtilde })
}

/// Simulates `cfg.runs` randomized runs per amplitude and compares the tail
/// sup of `|H(x)|` with `γ(v̄) = a₁⁻¹(ζ(v̄))`.
///
/// `v` is piecewise constant with values on the sphere `|v| = v̄` (clipped
/// to `U`); `d` and `d̃` are piecewise constant and uniform in `D` and
/// `[0, dtilde_amplitude]`.
pub fn uiss_gain_check(model: &SystemModel, cert: &LyapunovCertificate, amplitudes: &[f64], cfg: &GainConfig) -> Result<GainEstimate> {
    if amplitudes.is_empty() || amplitudes.iter().any(|a| !(*a >= 0.0 && a.is_finite())) {
        return Err(Error::Input("amplitudes must be a nonempty list of nonnegative numbers".into()));
    }
    if cfg.runs == 0 || !(cfg.t_final > 0.0) || !(cfg.dwell > 0.0) || !(cfg.dtilde_amplitude >= 0.0) || !(cfg.x0_radius >= 0.0) {
        return Err(Error::Input("gain check needs runs > 0, t_final > 0, dwell > 0 and nonnegative amplitudes".into()));
    }
    let t_tail = cfg.tail_start();
    if !(t_tail >= 0.0 && t_tail < cfg.t_final) {
        return Err(Error::Input(format!("tail start {t_tail} must lie in [0, {})", cfg.t_final)));
    }
    if model.d_box().iter().any(|b| !b.lo.is_finite() || !b.hi.is_finite()) {
        return Err(Error::Model("disturbance box must be bounded".into()));
    }
    let gamma = compose_gain(&cert.a1, &cert.zeta)?;
    let gamma_bounds = amplitudes.iter().map(|&a| gamma.eval(a)).collect::<std::result::Result<Vec<_>, _>>()?;
    let mut sim_cfg = IntegratorConfig::new(cfg.t_final);
    if let Some(s) = cfg.max_step {
        sim_cfg = sim_cfg.with_max_step(s);
    }
    let jobs: Vec<(usize, usize)> = (0..amplitudes.len()).flat_map(|a| (0..cfg.runs).map(move |r| (a, r))).collect();
    let outcomes = jobs
        .par_iter()
        .map(|&(a, run)| -> Result<(f64, Option<GainFailure>)> {
            let amplitude = amplitudes[a];
            let mut rng = stream(cfg.seed, PURPOSE_GAIN, (a * cfg.runs + run) as u64);
            let x0 = sphere_point(&mut rng, cfg.x0_radius, model.n());
            let inputs = random_inputs(model, amplitude, cfg, &mut rng)?;
            let traj = simulate(model, &x0, &inputs, &sim_cfg)?;
            let bound = gamma_bounds[a];
            if let Termination::BlowUp { time } = traj.termination {
                return Ok((f64::INFINITY, Some(GainFailure { amplitude, run, x0, tail_sup: f64::INFINITY, bound, blow_up: Some(time) })));
            }
            let tail_sup = traj.times.iter().zip(&traj.outputs).filter(|(t, _)| **t >= t_tail).map(|(_, y)| norm(y)).fold(0.0, f64::max);
            let failure = (tail_sup > bound + GAIN_TOL).then_some(GainFailure { amplitude, run, x0, tail_sup, bound, blow_up: None });
            Ok((tail_sup, failure))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut ultimate_bounds = vec![0.0f64; amplitudes.len()];
    let mut failures = Vec::new();
    for (&(a, _), (tail, failure)) in jobs.iter().zip(outcomes) {
        ultimate_bounds[a] = ultimate_bounds[a].max(tail);
        failures.extend(failure);
    }
    let (num, den) = amplitudes.iter().zip(&ultimate_bounds).fold((0.0, 0.0), |(n, d), (a, u)| (n + a * u, d + a * a));
    let k_hat = if den > 0.0 { num / den } else { 0.0 };
    let declared_slope = amplitudes.iter().zip(&gamma_bounds).filter(|(a, _)| **a > 0.0).map(|(a, g)| g / a).reduce(f64::max);
    let mut order: Vec<usize> = (0..amplitudes.len()).collect();
    order.sort_by(|&i, &j| amplitudes[i].total_cmp(&amplitudes[j]));
    let monotone = order.windows(2).all(|w| ultimate_bounds[w[1]] >= ultimate_bounds[w[0]] - GAIN_TOL);
    let mut notes = vec![
        format!("{} runs per amplitude, tail window [{t_tail}, {}]", cfg.runs, cfg.t_final),
        "Monte Carlo can only falsify the estimate; a pass means no violating run was found".into(),
    ];
    if model.u_box().iter().any(|b| b.lo.is_finite() || b.hi.is_finite()) {
        notes.push("input values were clipped to U".into());
    }
    Ok(GainEstimate {
        amplitudes: amplitudes.to_vec(),
        ultimate_bounds,
        gamma_bounds,
        k_hat,
        declared_slope,
        monotone,
        passed: failures.is_empty(),
        failures,
        runs: cfg.runs,
        t_tail,
        dtilde_amplitude: cfg.dtilde_amplitude,
        notes,
    })
}

/// Envelope values below this are not used in the log fit.
pub const KL_FIT_CUTOFF: f64 = 1e-10;
/// Factor applied to the residual-inflated constant.
pub const KL_SAFETY_FACTOR: f64 = 1.25;

/// Fit of `σ̄(s, t) = C·s·exp(−λ t)`.
#[derive(Clone, Debug, Serialize)]
pub struct KlFit {
    /// Least-squares constant before inflation.
    pub c_fit: f64,
    pub lambda: f64,
    /// `exp(max residual)·safety` applied to `c_fit`.
    pub inflation: f64,
    pub c: f64,
    pub rms_residual: f64,
    /// Fraction of stored samples of the fitted runs covered by `σ̄`.
    pub coverage: f64,
    pub used: usize,
    pub excluded: usize,
    pub points: usize,
}

impl KlFit {
    pub fn sigma(&self) -> KLFunction {
        KLFunction::Exponential { c: self.c, lambda: self.lambda }
    }

    pub fn eval(&self, s: f64, t: f64) -> f64 {
        self.c * s * (-self.lambda * t).exp()
    }
}

/// Future-sup envelope `max_{j ≥ k} |H(x(t_j))|`.
fn envelope(traj: &Trajectory) -> Vec<f64> {
    let mut env = vec![0.0; traj.outputs.len()];
    let mut best: f64 = 0.0;
    for k in (0..traj.outputs.len()).rev() {
        best = best.max(norm(&traj.outputs[k]));
        env[k] = best;
    }
    env
}

/// Fraction of stored samples with `|H(x(t))| ≤ σ̄(|x₀|, t − t₀)`.
pub fn kl_coverage(fit: &KlFit, trajectories: &[Trajectory]) -> f64 {
    let (mut hit, mut total) = (0usize, 0usize);
    for traj in trajectories {
        let s = norm(&traj.states[0]);
        let t0 = traj.times[0];
        for (t, y) in traj.times.iter().zip(&traj.outputs) {
            total += 1;
            if norm(y) <= fit.eval(s, t - t0) * (1.0 + 1e-12) {
                hit += 1;
            }
        }
    }
    if total == 0 {
        1.0
    } else {
        hit as f64 / total as f64
    }
}

/// Fits `ln(e(t)/|x₀|) = ln C − λ t` by least squares over the future-sup
/// envelopes `e` of `|H(x)|`, then inflates `C` so that the fit bounds every
/// fitted sample. Runs from `x₀ = 0` or that did not complete are excluded.
pub fn kl_fit(trajectories: &[Trajectory]) -> Result<KlFit> {
    let usable: Vec<&Trajectory> = trajectories.iter().filter(|t| t.completed() && norm(&t.states[0]) > 0.0).collect();
    let excluded = trajectories.len() - usable.len();
    if usable.len() < 3 {
        return Err(Error::InsufficientData(format!("{} usable trajectories, need at least 3", usable.len())));
    }
    let mut pts: Vec<(f64, f64)> = Vec::new();
    for traj in &usable {
        let s = norm(&traj.states[0]);
        let t0 = traj.times[0];
        for (t, e) in traj.times.iter().zip(envelope(traj)) {
            if e > KL_FIT_CUTOFF {
                pts.push((t - t0, (e / s).ln()));
            }
        }
    }
    if pts.len() < 2 {
        return Err(Error::InsufficientData("envelopes vanish immediately".into()));
    }
    let count = pts.len() as f64;
    let mean_t = pts.iter().map(|p| p.0).sum::<f64>() / count;
    let mean_z = pts.iter().map(|p| p.1).sum::<f64>() / count;
    let stt: f64 = pts.iter().map(|p| (p.0 - mean_t).powi(2)).sum();
    let stz: f64 = pts.iter().map(|p| (p.0 - mean_t) * (p.1 - mean_z)).sum();
    let slope = if stt > 0.0 { stz / stt } else { 0.0 };
    let ln_c = mean_z - slope * mean_t;
    let residuals: Vec<f64> = pts.iter().map(|(t, z)| z - (ln_c + slope * t)).collect();
    let max_res = residuals.iter().copied().fold(0.0, f64::max);
    let rms_residual = (residuals.iter().map(|r| r * r).sum::<f64>() / count).sqrt();
    let inflation = max_res.exp() * KL_SAFETY_FACTOR;
    let mut fit = KlFit {
        c_fit: ln_c.exp(),
        lambda: -slope,
        inflation,
        c: ln_c.exp() * inflation,
        rms_residual,
        coverage: 0.0,
        used: usable.len(),
        excluded,
        points: pts.len(),
    };
    let owned: Vec<Trajectory> = usable.into_iter().cloned().collect();
    fit.coverage = kl_coverage(&fit, &owned);
    Ok(fit)
}

/// Simulates one run with zero `v`, random `d` and `d̃` for the fit.
pub fn transient_run(model: &SystemModel, x0: &[f64], t_final: f64, dtilde_amplitude: f64, seed: u64, index: u64) -> Result<Trajectory> {
    let mut rng = stream(seed, PURPOSE_GAIN + 1, index);
    let mut cfg = GainConfig::new(1, seed, t_final);
    cfg.dtilde_amplitude = dtilde_amplitude;
    let inputs = random_inputs(model, 0.0, &cfg, &mut rng)?;
    simulate(model, x0, &inputs, &IntegratorConfig::new(t_final))
}

/// Points on the circle (or sphere) of `radius`, evenly spaced in angle
/// for `n = 2`.
pub fn circle_points(n: usize, radius: f64, count: usize) -> Vec<Vec<f64>> {
    (0..count)
        .map(|k| {
            let a = 2.0 * std::f64::consts::PI * k as f64 / count as f64;
            let mut x = vec![0.0; n];
            if n >= 1 {
                x[0] = radius * a.cos();
            }
            if n >= 2 {
                x[1] = radius * a.sin();
            }
            x
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::comparison::{ComparisonFunction, FnClass};
    use crate::expr::Expr;
    use crate::model::Interval;

    fn cf(text: &str, class: FnClass) -> ComparisonFunction {
        ComparisonFunction::parse(text, class).unwrap()
    }

    fn scalar() -> (SystemModel, LyapunovCertificate) {
        let model = SystemModel::parse(1, &["-2*xs[1] + v[1]"], &["x[1]"], "0.1", 0.1, vec![], vec![Interval::unbounded()]).unwrap();
        let cert = LyapunovCertificate::new(
            1,
            vec![Expr::parse("x[1]^2/2").unwrap()],
            vec![cf("0.1*s", FnClass::PositiveDefinite)],
            cf("s/4", FnClass::N),
            cf("2*s^2", FnClass::N),
            cf("s^2/2", FnClass::KInfinity),
            cf("s^2/2", FnClass::KInfinity),
            vec![Expr::parse("x[1]").unwrap()],
        )
        .unwrap();
        (model, cert)
    }

    #[test]
    fn zero_state_envelope() {
        let (model, cert) = scalar();
        let traj = simulate(&model, &[0.0], &Inputs::zero(&model), &IntegratorConfig::new(2.0)).unwrap();
        let rep = envelope_check(&traj, &cert, &Signal::zero(1), 1e-6).unwrap();
        assert!(rep.report.passed());
        assert_eq!(rep.report.worst_margin, 1e-6);
    }

    #[test]
    fn envelope_flags_growth() {
        let model = SystemModel::parse(1, &["xs[1]"], &["x[1]"], "0.1", 0.1, vec![], vec![Interval::unbounded()]).unwrap();
        let (_, cert) = scalar();
        let traj = simulate(&model, &[1.0], &Inputs::zero(&model), &IntegratorConfig::new(1.0)).unwrap();
        let rep = envelope_check(&traj, &cert, &Signal::zero(1), 1e-6).unwrap();
        assert!(!rep.report.passed());
        assert!(rep.violation_time.unwrap() > 0.0);
    }

    #[test]
    fn scalar_gain() {
        let (model, cert) = scalar();
        let est = uiss_gain_check(&model, &cert, &[0.0, 0.5], &GainConfig::new(4, 3, 12.0)).unwrap();
        assert!(est.passed, "{:?}", est.failures);
        assert!((est.gamma_bounds[1] - 1.0).abs() < 1e-9);
        assert!(est.ultimate_bounds[0] <= GAIN_TOL);
        assert!(est.monotone);
        assert!(est.k_hat <= est.declared_slope.unwrap());
    }

    #[test]
    fn fit_needs_three_runs() {
        let (model, _) = scalar();
        let runs: Vec<Trajectory> = [[0.0], [1.0], [2.0]].iter().map(|x| simulate(&model, x, &Inputs::zero(&model), &IntegratorConfig::new(5.0)).unwrap()).collect();
        assert!(matches!(kl_fit(&runs), Err(Error::InsufficientData(_))));
        let runs: Vec<Trajectory> = [[1.0], [-2.0], [3.0], [0.5]].iter().map(|x| simulate(&model, x, &Inputs::zero(&model), &IntegratorConfig::new(5.0)).unwrap()).collect();
        let fit = kl_fit(&runs).unwrap();
        assert!(fit.lambda > 0.0);
        assert_eq!(fit.coverage, 1.0);
    }
}
