//! Comparison machinery: the KL function generated by the scalar flow
//! `ẏ = −ρ(y)`, the comparison estimate it induces, and sampled checks of
//! the small-gain envelope hypothesis.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use rand::Rng;
use serde::Serialize;

use crate::comparison::{ComparisonError, ComparisonFunction, FnClass, KLFunction};
use crate::{Error, Result};

const FLOW_TOL: f64 = 1e-10;
const MAX_STEPS: usize = 1 << 22;
const BASE_STEP: f64 = 0.01;

/// `σ(s, t)`: solution at time `t` of `ẏ = −ρ(y)`, `y(0) = s`, extended by
/// `s·e^(−t)` for negative `t`.
#[derive(Debug)]
pub struct FlowSigma {
    rho: ComparisonFunction,
    memo: Mutex<HashMap<(u64, u64), f64>>,
}

fn memo_key(s: f64, t: f64) -> (u64, u64) {
    ((s * 1e12).round().to_bits(), (t * 1e12).round().to_bits())
}

impl FlowSigma {
    pub fn rho(&self) -> &ComparisonFunction {
        &self.rho
    }

    fn rhs(&self, y: f64) -> std::result::Result<f64, ComparisonError> {
        Ok(-self.rho.eval(y.max(0.0))?)
    }

    fn rk4_step(&self, y: f64, h: f64) -> std::result::Result<f64, ComparisonError> {
        let k1 = self.rhs(y)?;
        let k2 = self.rhs(y + 0.5 * h * k1)?;
        let k3 = self.rhs(y + 0.5 * h * k2)?;
        let k4 = self.rhs(y + h * k3)?;
        Ok((y + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)).max(0.0))
    }

    /// Integrates through the sorted nonnegative `lags` with `per_unit`
    /// steps per unit time (at least one step per gap).
    fn sweep(&self, s: f64, lags: &[f64], per_unit: f64) -> std::result::Result<Vec<f64>, ComparisonError> {
        let mut out = Vec::with_capacity(lags.len());
        let (mut y, mut t) = (s, 0.0);
        for &lag in lags {
            let gap = lag - t;
            if gap > 0.0 && y > 0.0 {
                let steps = ((gap * per_unit).ceil() as usize).max(1);
                let h = gap / steps as f64;
                for _ in 0..steps {
                    y = self.rk4_step(y, h)?;
                }
            }
            t = lag;
            out.push(y);
        }
        Ok(out)
    }

    /// `σ(s, lag)` for each lag, in input order.
    pub fn eval_many(&self, s: f64, lags: &[f64]) -> std::result::Result<Vec<f64>, ComparisonError> {
        if !(s >= 0.0) || !s.is_finite() {
            return Err(ComparisonError::Class(format!("KL argument must be nonnegative and finite, got {s}")));
        }
        let mut out = vec![0.0; lags.len()];
        let mut pending: Vec<(usize, f64)> = Vec::new();
        {
            let memo = self.memo.lock().expect("memo lock");
            for (i, &t) in lags.iter().enumerate() {
                if t < 0.0 {
                    out[i] = s * (-t).exp();
                } else if t == 0.0 || s == 0.0 {
                    out[i] = s;
                } else if let Some(&v) = memo.get(&memo_key(s, t)) {
                    out[i] = v;
                } else {
                    pending.push((i, t));
                }
            }
        }
        if pending.is_empty() {
            return Ok(out);
        }
        pending.sort_by(|a, b| a.1.total_cmp(&b.1));
        let sorted: Vec<f64> = pending.iter().map(|p| p.1).collect();
        let mut per_unit = 1.0 / BASE_STEP;
        let mut coarse = self.sweep(s, &sorted, per_unit)?;
        loop {
            per_unit *= 2.0;
            let fine = self.sweep(s, &sorted, per_unit)?;
            let agree = coarse.iter().zip(&fine).all(|(a, b)| (a - b).abs() <= FLOW_TOL * (1.0 + b.abs()));
            let total_steps = sorted.last().copied().unwrap_or(0.0) * per_unit;
            coarse = fine;
            if agree || total_steps > MAX_STEPS as f64 {
                break;
            }
        }
        let mut memo = self.memo.lock().expect("memo lock");
        for ((i, t), v) in pending.into_iter().zip(coarse) {
            out[i] = v;
            memo.insert(memo_key(s, t), v);
        }
        Ok(out)
    }

    pub fn eval(&self, s: f64, t: f64) -> std::result::Result<f64, ComparisonError> {
        Ok(self.eval_many(s, &[t])?[0])
    }
}

/// Builds the flow KL function of a positive definite `ρ`.
pub fn sigma_from_rho(rho: &ComparisonFunction) -> Result<KLFunction> {
    Ok(KLFunction::Flow(Arc::new(flow_sigma(rho)?)))
}

/// Like [`sigma_from_rho`] but returns the concrete flow.
pub fn flow_sigma(rho: &ComparisonFunction) -> Result<FlowSigma> {
    for s in crate::comparison::probe_grid() {
        let value = rho.eval(s)?;
        if value < 0.0 {
            return Err(ComparisonError::Class(format!("rho({s}) = {value} is negative")).into());
        }
        if s > 0.0 && value == 0.0 {
            return Err(ComparisonError::Class(format!("rho vanishes at s = {s}; it must be positive definite")).into());
        }
    }
    if rho.eval(0.0)? != 0.0 {
        return Err(ComparisonError::Class("rho(0) must be 0".into()).into());
    }
    let mut rho = rho.clone();
    if rho.class() != FnClass::PositiveDefinite {
        if let Some(body) = rho.body() {
            rho = ComparisonFunction::new(body.clone(), FnClass::PositiveDefinite)?;
        }
    }
    Ok(FlowSigma { rho, memo: Mutex::new(HashMap::new()) })
}

/// A scalar function sampled on an increasing time grid.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Sampled {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    /// Derivative samples; estimated by finite differences when absent.
    pub derivatives: Option<Vec<f64>>,
}

impl Sampled {
    pub fn new(times: Vec<f64>, values: Vec<f64>) -> Result<Sampled> {
        if times.len() != values.len() || times.len() < 2 {
            return Err(Error::Input("need at least two samples with matching times".into()));
        }
        if times.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::Input("sample times must be strictly increasing".into()));
        }
        Ok(Sampled { times, values, derivatives: None })
    }

    pub fn with_derivatives(mut self, derivatives: Vec<f64>) -> Result<Sampled> {
        if derivatives.len() != self.values.len() {
            return Err(Error::Input("derivative samples must match value samples".into()));
        }
        self.derivatives = Some(derivatives);
        Ok(self)
    }

    /// Samples `f` on a uniform grid.
    pub fn from_fn(t0: f64, t1: f64, count: usize, f: impl Fn(f64) -> f64) -> Result<Sampled> {
        let times: Vec<f64> = (0..count).map(|k| t0 + (t1 - t0) * k as f64 / (count - 1) as f64).collect();
        let values = times.iter().map(|&t| f(t)).collect();
        Sampled::new(times, values)
    }

    /// Supplied derivatives, or central differences (one-sided at the ends).
    pub fn derivative_estimates(&self) -> Vec<f64> {
        if let Some(d) = &self.derivatives {
            return d.clone();
        }
        let (t, y) = (&self.times, &self.values);
        let n = t.len();
        (0..n)
            .map(|k| {
                let (a, b) = if k == 0 {
                    (0, 1)
                } else if k == n - 1 {
                    (n - 2, n - 1)
                } else {
                    (k - 1, k + 1)
                };
                (y[b] - y[a]) / (t[b] - t[a])
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CheckOutcome {
    Pass,
    Fail,
    HypothesisViolated,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LemmaReport {
    pub check: String,
    pub outcome: CheckOutcome,
    /// Smallest slack of the checked inequality (negative = violated).
    pub worst_margin: f64,
    /// Time of the worst margin.
    pub witness_t: Option<f64>,
    /// Start of the window `ξ` for window-quantified hypotheses.
    pub witness_xi: Option<f64>,
    pub samples: usize,
    pub notes: Vec<String>,
}

impl LemmaReport {
    pub fn passed(&self) -> bool {
        self.outcome == CheckOutcome::Pass
    }
}

#[derive(Default)]
struct Worst {
    margin: f64,
    t: Option<f64>,
    xi: Option<f64>,
    init: bool,
}

impl Worst {
    fn record(&mut self, margin: f64, t: f64, xi: Option<f64>) {
        if !self.init || margin < self.margin {
            self.margin = margin;
            self.t = Some(t);
            self.xi = xi;
            self.init = true;
        }
    }
}

fn same_grid(y: &Sampled, u: &Sampled) -> Result<()> {
    if y.times != u.times {
        return Err(Error::Input("y and u must be sampled on the same grid".into()));
    }
    Ok(())
}

/// Checks the implication `y ≥ u ⇒ ẏ ≤ −ρ(y)` on the samples and then the
/// estimate `y(t) ≤ max{σ(y(t0), t−t0), sup_s σ(u(s), t−s)}` with `σ` the
/// flow of `ρ`.
///
/// The supremum over sample times is propagated with the flow: monotonicity
/// and the semigroup property give
/// `w_k = max{Φ(w_{k−1}, t_k − t_{k−1}), u_k}` exactly.
pub fn comparison_check(y: &Sampled, u: &Sampled, rho: &ComparisonFunction, tol: f64) -> Result<LemmaReport> {
    same_grid(y, u)?;
    let flow = flow_sigma(rho)?;
    let ydot = y.derivative_estimates();
    let n = y.times.len();

    let mut hyp = Worst::default();
    for k in 0..n {
        if y.values[k] >= u.values[k] {
            let margin = -flow.rho.eval(y.values[k].max(0.0))? - ydot[k] + tol;
            hyp.record(margin, y.times[k], None);
        }
    }
    if hyp.init && hyp.margin < 0.0 {
        return Ok(LemmaReport {
            check: "comparison".into(),
            outcome: CheckOutcome::HypothesisViolated,
            worst_margin: hyp.margin,
            witness_t: hyp.t,
            witness_xi: None,
            samples: n,
            notes: vec!["implication y >= u => dy/dt <= -rho(y) fails on the sample; conclusion not evaluated".into()],
        });
    }

    let mut w = y.values[0].max(u.values[0]).max(0.0);
    let mut con = Worst::default();
    con.record(w - y.values[0] + tol, y.times[0], None);
    for k in 1..n {
        w = flow.eval(w, y.times[k] - y.times[k - 1])?.max(u.values[k].max(0.0));
        con.record(w - y.values[k] + tol, y.times[k], None);
    }
    let outcome = if con.margin >= 0.0 { CheckOutcome::Pass } else { CheckOutcome::Fail };
    Ok(LemmaReport {
        check: "comparison".into(),
        outcome,
        worst_margin: con.margin - tol,
        witness_t: con.t,
        witness_xi: None,
        samples: n,
        notes: vec![],
    })
}

/// Checks the window hypothesis
/// `y(t) ≤ max{σ(M, t−ξ), a(sup_{[ξ,t]} y), u(t)}` for every sample `ξ ≤ t`
/// and two consequences of the small-gain conclusion: the uniform bound
/// `y(t) ≤ max{σ(M, 0), sup_{[t0,t]} u}` and eventual domination on the last
/// tenth of the window, `sup y ≤ max{a(sup y), sup u}`.
///
/// The KL function of the conclusion itself is not constructed.
pub fn smallgain_envelope_check(y: &Sampled, u: &Sampled, sigma: &KLFunction, a: &ComparisonFunction, m: f64, tol: f64) -> Result<LemmaReport> {
    same_grid(y, u)?;
    let contraction = crate::comparison::check_strict_contraction(a, crate::comparison::GridSpec::new(200))?;
    if !contraction.passed {
        return Err(Error::Input(format!("a must satisfy a(s) < s for s > 0; violated at s = {}", contraction.worst.map_or(f64::NAN, |w| w.s))));
    }
    let t = &y.times;
    let n = t.len();

    let mut lags: Vec<f64> = Vec::with_capacity(n * (n + 1) / 2);
    for i in 0..n {
        for k in i..n {
            lags.push(t[k] - t[i]);
        }
    }
    lags.sort_by(f64::total_cmp);
    lags.dedup();
    let sig = sigma.eval_lags(m, &lags)?;
    let sigma_at = |lag: f64| sig[lags.partition_point(|&l| l < lag).min(lags.len() - 1)];

    let mut hyp = Worst::default();
    for i in 0..n {
        let mut running = f64::NEG_INFINITY;
        let mut a_running = 0.0;
        for k in i..n {
            if y.values[k] > running {
                running = y.values[k];
                a_running = a.eval(running.max(0.0))?;
            }
            let bound = sigma_at(t[k] - t[i]).max(a_running).max(u.values[k]);
            hyp.record(bound + tol - y.values[k], t[k], Some(t[i]));
        }
    }
    if hyp.margin < 0.0 {
        return Ok(LemmaReport {
            check: "smallgain".into(),
            outcome: CheckOutcome::HypothesisViolated,
            worst_margin: hyp.margin,
            witness_t: hyp.t,
            witness_xi: hyp.xi,
            samples: n,
            notes: vec!["window hypothesis fails on the sample".into()],
        });
    }

    let sigma_m0 = sigma.eval(m, 0.0)?;
    let mut con = Worst::default();
    let mut sup_u = f64::NEG_INFINITY;
    for k in 0..n {
        sup_u = sup_u.max(u.values[k]);
        con.record(sigma_m0.max(sup_u) + tol - y.values[k], t[k], None);
    }
    let sup_y = y.values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let tail_start = t[0] + 0.9 * (t[n - 1] - t[0]);
    let tail_sup = (0..n).filter(|&k| t[k] >= tail_start).map(|k| y.values[k]).fold(f64::NEG_INFINITY, f64::max);
    let dominated = a.eval(sup_y.max(0.0))?.max(sup_u) + tol - tail_sup;
    con.record(dominated, tail_start, None);

    let outcome = if con.margin >= 0.0 { CheckOutcome::Pass } else { CheckOutcome::Fail };
    Ok(LemmaReport {
        check: "smallgain".into(),
        outcome,
        worst_margin: con.margin - tol,
        witness_t: con.t,
        witness_xi: None,
        samples: n,
        notes: vec!["only necessary consequences of the small-gain estimate are checked".into()],
    })
}

/// Random pair `(y, u)` satisfying the comparison hypothesis by construction:
/// `y` follows the flow while `y ≥ u` and climbs toward `u` (never past the
/// flow of `u`) otherwise.
pub fn comparison_scenario<R: Rng>(rho: &ComparisonFunction, rng: &mut R, horizon: f64, steps: usize) -> Result<(Sampled, Sampled)> {
    let flow = flow_sigma(rho)?;
    let dt = horizon / steps as f64;
    let jumps: Vec<(f64, f64)> = {
        let count = rng.gen_range(2..8);
        let mut j: Vec<(f64, f64)> = (0..count).map(|_| (rng.gen_range(0.0..horizon), rng.gen_range(0.0..3.0))).collect();
        j.sort_by(|a, b| a.0.total_cmp(&b.0));
        j
    };
    let u_at = |t: f64| jumps.iter().rev().find(|(s, _)| *s <= t).map_or(0.0, |j| j.1);
    let cap = rng.gen_range(0.5..5.0);
    let mut times = Vec::with_capacity(steps + 1);
    let mut ys = Vec::with_capacity(steps + 1);
    let mut us = Vec::with_capacity(steps + 1);
    let mut ds = Vec::with_capacity(steps + 1);
    let mut y = rng.gen_range(0.0..4.0);
    for k in 0..=steps {
        let t = k as f64 * dt;
        let u = u_at(t);
        times.push(t);
        ys.push(y);
        us.push(u);
        if y >= u {
            ds.push(-flow.rho.eval(y)?);
            y = flow.eval(y, dt)?;
        } else {
            let next = (y + dt * cap).min(flow.eval(u, dt)?).max(flow.eval(y, dt)?);
            ds.push((next - y) / dt);
            y = next;
        }
    }
    Ok((Sampled::new(times.clone(), ys)?.with_derivatives(ds)?, Sampled::new(times, us)?))
}

/// Random pair satisfying the window hypothesis by construction:
/// `y_k = θ_k·min{max{σ(M, t_k), a(y_{k−1}), u_k}, max{σ(M, 0), u_k}}`.
pub fn smallgain_scenario<R: Rng>(sigma: &KLFunction, a: &ComparisonFunction, m: f64, rng: &mut R, horizon: f64, steps: usize) -> Result<(Sampled, Sampled)> {
    let dt = horizon / steps as f64;
    let times: Vec<f64> = (0..=steps).map(|k| k as f64 * dt).collect();
    let sig = sigma.eval_lags(m, &times)?;
    let level = rng.gen_range(0.0..1.5) * m;
    let switch = rng.gen_range(0.0..horizon);
    let us: Vec<f64> = times.iter().map(|&t| if t < switch { rng.gen_range(0.0..=level) } else { rng.gen_range(0.0..=0.5 * level) }).collect();
    let mut ys = Vec::with_capacity(times.len());
    let mut prev = m.max(us[0]);
    for k in 0..times.len() {
        let theta = if k == 0 { 1.0 } else { rng.gen_range(0.7..=1.0) };
        let bound = sig[k].max(a.eval(prev)?).max(us[k]).min(sig[0].max(us[k]));
        let y = theta * bound;
        ys.push(y);
        prev = y;
    }
    Ok((Sampled::new(times.clone(), ys)?, Sampled::new(times, us)?))
}
