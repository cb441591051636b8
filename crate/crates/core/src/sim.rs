//! Hybrid integration of the sampled-data system and the closed-loop
//! emulation of a continuous-time feedback under zero-order hold.
//!
//! Each sampling interval is integrated with fixed-step classical RK4. The
//! held state and input are frozen for the whole interval, and integration
//! restarts at every sampling instant and at every breakpoint of the
//! piecewise-constant inputs, so the right-hand side is smooth on every
//! internal step.

use crate::expr::{Expr, Role, Var};
use crate::model::{FieldLayout, Interval, PlantModel, SystemModel};
use crate::signal::{Signal, SignalKind};
use crate::trajectory::{Termination, Trajectory};
use crate::verify::norm;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IntegratorConfig {
    /// Largest RK4 step; defaults to `min(r/50, 1e-2)`.
    pub max_step: Option<f64>,
    /// Blow-up threshold on `|x|`.
    pub blowup_threshold: f64,
    pub t0: f64,
    pub t_final: f64,
}

impl IntegratorConfig {
    pub fn new(t_final: f64) -> IntegratorConfig {
        IntegratorConfig { max_step: None, blowup_threshold: 1e8, t0: 0.0, t_final }
    }

    pub fn with_max_step(mut self, step: f64) -> IntegratorConfig {
        self.max_step = Some(step);
        self
    }

    pub fn step_for(&self, r: f64) -> f64 {
        self.max_step.unwrap_or_else(|| (r / 50.0).min(1e-2))
    }
}

/// Disturbance `d`, actuator input `v` and schedule perturbation `d̃`.
#[derive(Clone, Debug)]
pub struct Inputs {
    pub d: Signal,
    pub v: Signal,
    pub dtilde: Signal,
}

impl Inputs {
    /// All-zero inputs, with `d` at the lower corner of `D` when `0 ∉ D`.
    pub fn zero(model: &SystemModel) -> Inputs {
        let d = model.d_box().iter().map(|b| 0f64.clamp(b.lo, b.hi)).collect();
        Inputs { d: Signal::constant(d), v: Signal::zero(model.m()), dtilde: Signal::zero(1) }
    }

    pub fn shifted(&self, theta: f64) -> Result<Inputs> {
        Ok(Inputs { d: self.d.shifted(theta)?, v: self.v.shifted(theta)?, dtilde: self.dtilde.shifted(theta)? })
    }
}

const INPUT_TOL: f64 = 1e-12;

fn check_values(name: &str, values: &[f64], bounds: &[Interval]) -> Result<()> {
    for (j, (&v, b)) in values.iter().zip(bounds).enumerate() {
        if !b.contains(v, INPUT_TOL * (1.0 + v.abs())) {
            return Err(Error::Input(format!("{name}[{}] = {v} outside [{}, {}]", j + 1, b.lo, b.hi)));
        }
    }
    Ok(())
}

fn check_signal(name: &str, sig: &Signal, bounds: &[Interval]) -> Result<()> {
    if sig.dim() != bounds.len() {
        return Err(Error::Input(format!("signal {name} has dimension {}, expected {}", sig.dim(), bounds.len())));
    }
    match sig.kind() {
        SignalKind::Constant(v) => check_values(name, v, bounds),
        SignalKind::Piecewise { values, .. } => values.iter().try_for_each(|v| check_values(name, v, bounds)),
        SignalKind::Expression(_) => Ok(()),
    }
}

/// Writes the packed inputs at a stage time.
type InputRefresh<'a> = dyn Fn(f64, &mut [f64]) -> Result<()> + 'a;

struct Stepper<'a> {
    model: &'a SystemModel,
    layout: FieldLayout,
    buf: Vec<f64>,
    k: [Vec<f64>; 4],
    tmp: Vec<f64>,
}

impl<'a> Stepper<'a> {
    fn new(model: &'a SystemModel) -> Stepper<'a> {
        let n = model.n();
        let layout = model.layout();
        Stepper { model, layout, buf: vec![0.0; layout.len()], k: std::array::from_fn(|_| vec![0.0; n]), tmp: vec![0.0; n] }
    }

    fn rhs(&mut self, x: &[f64], stage: usize) -> Result<()> {
        let n = self.layout.n;
        self.buf[..n].copy_from_slice(x);
        let (buf, out) = (&self.buf, &mut self.k[stage]);
        self.model.eval_f_packed(buf, out)
    }

    /// One RK4 step; inputs are refreshed at stage times when `refresh` is set.
    fn step(&mut self, x: &mut [f64], t: f64, h: f64, refresh: Option<&InputRefresh<'_>>) -> Result<()> {
        let n = x.len();
        let set_inputs = |stepper: &mut Stepper, tt: f64| -> Result<()> {
            if let Some(f) = refresh {
                f(tt, &mut stepper.buf)?;
            }
            Ok(())
        };
        set_inputs(self, t)?;
        self.rhs(x, 0)?;
        for i in 0..n {
            self.tmp[i] = x[i] + 0.5 * h * self.k[0][i];
        }
        set_inputs(self, t + 0.5 * h)?;
        let tmp = self.tmp.clone();
        self.rhs(&tmp, 1)?;
        for i in 0..n {
            self.tmp[i] = x[i] + 0.5 * h * self.k[1][i];
        }
        let tmp = self.tmp.clone();
        self.rhs(&tmp, 2)?;
        for i in 0..n {
            self.tmp[i] = x[i] + h * self.k[2][i];
        }
        set_inputs(self, t + h)?;
        let tmp = self.tmp.clone();
        self.rhs(&tmp, 3)?;
        for i in 0..n {
            x[i] += h / 6.0 * (self.k[0][i] + 2.0 * self.k[1][i] + 2.0 * self.k[2][i] + self.k[3][i]);
        }
        Ok(())
    }
}

fn is_piecewise(sig: &Signal) -> bool {
    !matches!(sig.kind(), SignalKind::Expression(_))
}

/// Simulates the sampled-data system from `x0` at `cfg.t0` to `cfg.t_final`.
pub fn simulate(model: &SystemModel, x0: &[f64], inputs: &Inputs, cfg: &IntegratorConfig) -> Result<Trajectory> {
    let n = model.n();
    if x0.len() != n || x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::Input(format!("initial state must be a finite {n}-vector")));
    }
    if !(cfg.t_final >= cfg.t0) {
        return Err(Error::Input("t_final must not precede t0".into()));
    }
    if !(cfg.blowup_threshold > 0.0) {
        return Err(Error::Input("blow-up threshold must be positive".into()));
    }
    let step = cfg.step_for(model.r());
    if !(step > 0.0) {
        return Err(Error::Input("max_step must be positive".into()));
    }
    check_signal("d", &inputs.d, model.d_box())?;
    check_signal("v", &inputs.v, model.u_box())?;
    check_signal("dtilde", &inputs.dtilde, &[Interval::new(0.0, f64::INFINITY)])?;

    let layout = model.layout();
    let (l, m) = (layout.l, layout.m);
    let mut traj = Trajectory {
        times: vec![cfg.t0],
        states: vec![x0.to_vec()],
        outputs: vec![model.eval_output(x0)?],
        interval_index: vec![0],
        sampling_instants: Vec::new(),
        held_states: Vec::new(),
        held_inputs: Vec::new(),
        held_dtilde: Vec::new(),
        held_h: Vec::new(),
        termination: Termination::Completed,
    };
    let mut stepper = Stepper::new(model);
    let mut x = x0.to_vec();
    let mut d = vec![0.0; l];
    let mut v = vec![0.0; m];
    let mut vs = vec![0.0; m];
    let mut dt = [0.0];
    let mut tau = cfg.t0;
    let mut interval = 0usize;
    let piecewise_inputs = is_piecewise(&inputs.d) && is_piecewise(&inputs.v);
    let refresh = |t: f64, buf: &mut [f64]| -> Result<()> {
        let (dd, rest) = buf[layout.d()..].split_at_mut(l);
        inputs.d.eval_into(t, dd)?;
        check_values("d", dd, model.d_box())?;
        inputs.v.eval_into(t, &mut rest[..m])?;
        check_values("v", &rest[..m], model.u_box())?;
        Ok(())
    };

    while tau < cfg.t_final {
        if interval > 0 {
            traj.times.push(tau);
            traj.states.push(x.clone());
            traj.outputs.push(model.eval_output(&x)?);
            traj.interval_index.push(interval);
        }
        inputs.v.eval_into(tau, &mut vs)?;
        check_values("v", &vs, model.u_box())?;
        inputs.dtilde.eval_into(tau, &mut dt)?;
        if !(dt[0] >= 0.0) {
            return Err(Error::Input(format!("dtilde({tau}) = {} must be nonnegative", dt[0])));
        }
        let hx = model.eval_h(&x)?;
        if !(hx > 0.0 && hx <= model.r() * (1.0 + 1e-12)) {
            return Err(Error::Model(format!("h(x(tau)) = {hx} outside (0, {}] at t = {tau}", model.r())));
        }
        let tau_next = tau + (-dt[0]).exp() * hx;
        traj.sampling_instants.push(tau);
        traj.held_states.push(x.clone());
        traj.held_inputs.push(vs.clone());
        traj.held_dtilde.push(dt[0]);
        traj.held_h.push(hx);
        stepper.buf[layout.xs()..layout.xs() + n].copy_from_slice(&x);
        stepper.buf[layout.vs()..layout.vs() + m].copy_from_slice(&vs);

        let seg_end = tau_next.min(cfg.t_final);
        let mut cuts: Vec<f64> = vec![tau];
        let mut bps: Vec<f64> = inputs.d.breakpoints_between(tau, seg_end).iter().chain(inputs.v.breakpoints_between(tau, seg_end)).copied().collect();
        bps.sort_by(f64::total_cmp);
        for b in bps {
            let last = *cuts.last().unwrap();
            if b - last > 1e-12 * (1.0 + b.abs()) && seg_end - b > 1e-12 * (1.0 + b.abs()) {
                cuts.push(b);
            }
        }
        cuts.push(seg_end);

        for w in cuts.windows(2) {
            let (a, b) = (w[0], w[1]);
            let steps = (((b - a) / step) - 1e-9).ceil().max(1.0) as usize;
            let h = (b - a) / steps as f64;
            if piecewise_inputs {
                let mid = 0.5 * (a + b);
                inputs.d.eval_into(mid, &mut d)?;
                inputs.v.eval_into(mid, &mut v)?;
                check_values("d", &d, model.d_box())?;
                check_values("v", &v, model.u_box())?;
                layout.pack(&mut stepper.buf, &x, &x, &d, &v, &vs);
                stepper.buf[layout.xs()..layout.xs() + n].copy_from_slice(&traj.held_states[interval]);
            }
            for s in 0..steps {
                let t = a + s as f64 * h;
                stepper.step(&mut x, t, h, if piecewise_inputs { None } else { Some(&refresh) })?;
                let t_new = if s + 1 == steps { b } else { a + (s + 1) as f64 * h };
                let blown = x.iter().any(|v| !v.is_finite()) || norm(&x) > cfg.blowup_threshold;
                if blown {
                    traj.termination = Termination::BlowUp { time: t_new };
                    return Ok(traj);
                }
                let is_last_row = t_new == seg_end;
                if !is_last_row {
                    traj.times.push(t_new);
                    traj.states.push(x.clone());
                    traj.outputs.push(model.eval_output(&x)?);
                    traj.interval_index.push(interval);
                }
            }
        }
        if tau_next >= cfg.t_final {
            traj.times.push(seg_end);
            traj.states.push(x.clone());
            traj.outputs.push(model.eval_output(&x)?);
            traj.interval_index.push(interval);
            break;
        }
        tau = tau_next;
        interval += 1;
    }
    Ok(traj)
}

/// Largest state deviation between a run started at `θ` and a run started
/// at `0` with the shifted inputs `P_θ`, compared row by row.
pub fn check_time_invariance(model: &SystemModel, x0: &[f64], inputs: &Inputs, theta: f64, cfg: &IntegratorConfig) -> Result<f64> {
    if !(theta >= 0.0) {
        return Err(Error::Input("theta must be nonnegative".into()));
    }
    let horizon = cfg.t_final - cfg.t0;
    let late = simulate(model, x0, inputs, &IntegratorConfig { t0: theta, t_final: theta + horizon, ..*cfg })?;
    let early = simulate(model, x0, &inputs.shifted(theta)?, &IntegratorConfig { t0: 0.0, t_final: horizon, ..*cfg })?;
    let mut worst: f64 = 0.0;
    if late.times.len() == early.times.len() {
        for (a, b) in late.states.iter().zip(&early.states) {
            worst = worst.max(a.iter().zip(b).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max));
        }
    } else {
        for (k, &t) in early.times.iter().enumerate() {
            let a = late.state_at(t + theta);
            worst = worst.max(a.iter().zip(&early.states[k]).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max));
        }
    }
    Ok(worst)
}

/// Closed loop of `plant` under the sampled feedback
/// `u = k(x(τ_i) + e(τ_i)) + v(t)`.
///
/// The input vector of the result is the actuator error `v[1..m]` (when the
/// actuator channel is on) followed by the measurement error `e[1..n]`
/// (when the measurement channel is on); the measurement error enters only
/// through its held sample.
pub fn emulate_feedback(plant: &PlantModel, h: Expr, r: f64) -> Result<SystemModel> {
    plant.validate()?;
    let (n, m) = (plant.n, plant.m);
    let e_offset = if plant.actuator_error { m } else { 0 };
    let held_arg = |i: usize| {
        let xs = Expr::Var(Var::indexed("xs", i));
        if plant.measurement_error {
            Expr::Add(Box::new(xs), Box::new(Expr::Var(Var::indexed("vs", e_offset + i))))
        } else {
            xs
        }
    };
    let mut controls = Vec::with_capacity(m);
    for (j, k) in plant.k.iter().enumerate() {
        if let Some(bad) = k.variables().into_iter().find(|v| v.role() != Role::X || v.index().is_none_or(|i| i > n)) {
            return Err(Error::Model(format!("k[{}] uses `{bad}`; feedback must depend on x[1..{n}] only", j + 1)));
        }
        let held = k.substitute(&|v| (v.role() == Role::X).then(|| held_arg(v.index().unwrap())));
        controls.push(if plant.actuator_error { crate::expr::build::add(held, Expr::var("v", j + 1)) } else { held });
    }
    let f = plant
        .f_open
        .iter()
        .map(|e| e.substitute(&|v| (v.role() == Role::U).then(|| controls[v.index().unwrap() - 1].clone())))
        .collect();
    let mut u_box = Vec::new();
    if plant.actuator_error {
        u_box.extend_from_slice(&plant.v_box);
    }
    if plant.measurement_error {
        u_box.extend_from_slice(&plant.e_box);
    }
    SystemModel::new(n, f, plant.output.clone(), h, r, plant.d_box.clone(), u_box)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::Env;

    fn scalar_hold(h: f64) -> SystemModel {
        SystemModel::parse(1, &["-xs[1]"], &["x[1]"], &h.to_string(), h, vec![], vec![Interval::point(0.0)]).unwrap()
    }

    #[test]
    fn constant_rhs_integrates_linearly() {
        let model = scalar_hold(0.5);
        let traj = simulate(&model, &[1.0], &Inputs::zero(&model), &IntegratorConfig::new(0.5)).unwrap();
        assert!((traj.final_state()[0] - 0.5).abs() < 1e-14);
        assert_eq!(traj.final_time(), 0.5);
    }

    #[test]
    fn schedule_and_rows() {
        let model = scalar_hold(0.25);
        let traj = simulate(&model, &[1.0], &Inputs::zero(&model), &IntegratorConfig::new(1.0)).unwrap();
        assert_eq!(traj.sampling_instants, vec![0.0, 0.25, 0.5, 0.75]);
        for &tau in &traj.sampling_instants {
            assert!(traj.times.contains(&tau));
        }
        // x(τ_{i+1}) = x(τ_i)·(1 − 0.25)
        for w in traj.held_states.windows(2) {
            assert!((w[1][0] - 0.75 * w[0][0]).abs() < 1e-14);
        }
        assert!(traj.to_csv().starts_with("t,x1,y1,interval_index,sample\n"));
    }

    #[test]
    fn schedule_perturbation_shrinks_intervals() {
        let model = scalar_hold(0.5);
        let inputs = Inputs { dtilde: Signal::constant(vec![2f64.ln()]), ..Inputs::zero(&model) };
        let traj = simulate(&model, &[1.0], &inputs, &IntegratorConfig::new(1.0)).unwrap();
        assert!((traj.sampling_instants[1] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn blow_up_is_reported() {
        let model = SystemModel::parse(1, &["x[1]^2"], &["x[1]"], "0.1", 0.1, vec![], vec![]).unwrap();
        let traj = simulate(&model, &[1.0], &Inputs::zero(&model), &IntegratorConfig::new(5.0)).unwrap();
        match traj.termination {
            Termination::BlowUp { time } => assert!(time > 0.9 && time < 1.1, "{time}"),
            Termination::Completed => panic!("expected blow-up"),
        }
    }

    #[test]
    fn out_of_box_input_is_rejected() {
        let model = SystemModel::parse(1, &["-x[1] + v[1]"], &["x[1]"], "0.1", 0.1, vec![], vec![Interval::symmetric(1.0)]).unwrap();
        let inputs = Inputs { v: Signal::constant(vec![2.0]), ..Inputs::zero(&model) };
        assert!(matches!(simulate(&model, &[1.0], &inputs, &IntegratorConfig::new(1.0)), Err(Error::Input(_))));
        let inputs = Inputs { dtilde: Signal::constant(vec![-1.0]), ..Inputs::zero(&model) };
        assert!(matches!(simulate(&model, &[1.0], &inputs, &IntegratorConfig::new(1.0)), Err(Error::Input(_))));
    }

    #[test]
    fn fourth_order_convergence() {
        let model = SystemModel::parse(1, &["-x[1]"], &["x[1]"], "2", 2.0, vec![], vec![]).unwrap();
        let err = |h: f64| {
            let traj = simulate(&model, &[1.0], &Inputs::zero(&model), &IntegratorConfig::new(1.0).with_max_step(h)).unwrap();
            (traj.final_state()[0] - (-1f64).exp()).abs()
        };
        let errors: Vec<f64> = [0.1, 0.05, 0.025, 0.0125].iter().map(|&h| err(h)).collect();
        for w in errors.windows(2) {
            assert!(w[0] / w[1] >= 12.0, "{errors:?}");
        }
    }

    #[test]
    fn breakpoints_split_steps() {
        // x' = v with v switching inside a sampling interval: exact integral
        let model = SystemModel::parse(1, &["v[1]"], &["x[1]"], "1", 1.0, vec![], vec![Interval::symmetric(1.0)]).unwrap();
        let v = Signal::piecewise(vec![0.0, 0.3337], vec![vec![1.0], vec![-1.0]]).unwrap();
        let traj = simulate(&model, &[0.0], &Inputs { v, ..Inputs::zero(&model) }, &IntegratorConfig::new(1.0)).unwrap();
        assert!((traj.final_state()[0] - (0.3337 - 0.6663)).abs() < 1e-13);
    }

    #[test]
    fn expression_inputs_follow_time() {
        let model = SystemModel::parse(1, &["v[1]"], &["x[1]"], "1", 1.0, vec![], vec![Interval::symmetric(1.0)]).unwrap();
        let v = Signal::parse_expression(&["cos(t)"]).unwrap();
        let traj = simulate(&model, &[0.0], &Inputs { v, ..Inputs::zero(&model) }, &IntegratorConfig::new(1.0)).unwrap();
        assert!((traj.final_state()[0] - 1f64.sin()).abs() < 1e-10);
    }

    #[test]
    fn constant_inputs_are_shift_invariant() {
        let model = scalar_hold(0.2);
        let dev = check_time_invariance(&model, &[1.0], &Inputs::zero(&model), 1.5, &IntegratorConfig::new(3.0)).unwrap();
        assert!(dev <= 1e-9, "{dev}");
    }

    fn parse_all(v: &[&str]) -> Vec<Expr> {
        v.iter().map(|t| Expr::parse(t).unwrap()).collect()
    }

    #[test]
    fn emulation_of_scalar_plant() {
        let plant = PlantModel::new(1, parse_all(&["u[1]"]), parse_all(&["x[1]"]), parse_all(&["-2*x[1]"]), vec![], vec![Interval::symmetric(1.0)]).unwrap();
        let model = emulate_feedback(&plant, Expr::num(0.1), 0.1).unwrap();
        assert_eq!(model.f()[0], Expr::parse("-2*xs[1] + v[1]").unwrap());
    }

    #[test]
    fn emulation_with_zero_feedback_passes_input_through() {
        let plant = PlantModel::new(1, parse_all(&["-x[1]^3 + u[1]"]), parse_all(&["x[1]"]), parse_all(&["0"]), vec![], vec![Interval::symmetric(1.0)]).unwrap();
        let model = emulate_feedback(&plant, Expr::num(0.1), 0.1).unwrap();
        let expected = Expr::parse("-x[1]^3 + v[1]").unwrap();
        for (x, v) in [(0.5, 0.2), (-1.0, 1.0)] {
            let env = Env { x: &[x], v: &[v], ..Env::default() };
            assert_eq!(model.f()[0].eval(&env).unwrap(), expected.eval(&env).unwrap());
        }
    }

    #[test]
    fn measurement_error_enters_through_held_sample() {
        let mut plant = PlantModel::new(1, parse_all(&["u[1]"]), parse_all(&["x[1]"]), parse_all(&["-2*x[1]"]), vec![], vec![Interval::symmetric(1.0)]).unwrap();
        plant.measurement_error = true;
        plant.e_box = vec![Interval::symmetric(0.5)];
        let model = emulate_feedback(&plant, Expr::num(0.1), 0.1).unwrap();
        assert_eq!(model.m(), 2);
        assert_eq!(model.f()[0].eval(&Env { xs: &[1.0], v: &[0.0, 9.0], vs: &[0.0, 0.25], ..Env::default() }).unwrap(), -2.5);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let plant = PlantModel {
            n: 1,
            m: 2,
            f_open: parse_all(&["u[1]"]),
            output: parse_all(&["x[1]"]),
            k: parse_all(&["-x[1]"]),
            d_box: vec![],
            v_box: vec![],
            e_box: vec![],
            measurement_error: false,
            actuator_error: false,
        };
        assert!(emulate_feedback(&plant, Expr::num(0.1), 0.1).is_err());
    }
}
