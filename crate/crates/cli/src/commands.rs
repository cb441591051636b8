//! Subcommand implementations.
//!
//! Every command returns whether its checks passed; input problems are
//! errors.

use std::io::Write;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use sdlyap_core::backstep::{check_dissipation, check_hypothesis_p, find_h, HypothesisP};
use sdlyap_core::builtins::{builtin, BuiltinParams};
use sdlyap_core::certify::{circle_points, kl_fit, transient_run, uiss_gain_check, GainConfig};
use sdlyap_core::lemma::{comparison_check, comparison_scenario, sigma_from_rho, smallgain_envelope_check, smallgain_scenario, LemmaReport};
use sdlyap_core::masp::{masp_bisection, masp_example41_single, masp_example41_vector, MASPResult, MaspStatus};
use sdlyap_core::rng::stream;
use sdlyap_core::sim::{simulate, IntegratorConfig, Inputs};
use sdlyap_core::trajectory::Termination;
use sdlyap_core::verify::{analytic_b_check, check_hypotheses, decrease_check, sandwich_check, HypothesisCandidates};
use sdlyap_core::{ComparisonFunction, FnClass, Interval, Region, SampleBudget, Status, SystemModel};

use crate::cli::*;
use crate::signals::{parse_signal, Channel};
use crate::spec::{load_system_spec, SystemSpec};

/// Stream purposes of the command-line random signals and scenarios.
const PURPOSE_D: u64 = 0x900;
const PURPOSE_V: u64 = 0x901;
const PURPOSE_DTILDE: u64 = 0x902;
const PURPOSE_LEMMA: u64 = 0xA00;

/// Grid used to validate comparison-function classes.
const CLASS_GRID: usize = 201;

/// Default lower end of the first disturbance interval in the single
/// closed form, where `delta = 0` is infeasible.
const SINGLE_DEFAULT_DELTA: f64 = 1.0;

struct Loaded {
    name: String,
    spec: SystemSpec,
}

impl Loaded {
    fn model(&self) -> Result<&SystemModel> {
        self.spec.model.as_ref().ok_or_else(|| anyhow!("{} defines no closed-loop system", self.name))
    }
}

fn load(source: &Source) -> Result<Loaded> {
    match (&source.system, &source.builtin) {
        (Some(path), None) => {
            let mut spec = load_system_spec(path)?;
            if let Some(r) = source.r {
                spec.model = spec.model.map(|m| m.with_constant_sampling(r)).transpose()?;
            }
            Ok(Loaded { name: path.display().to_string(), spec })
        }
        (None, Some(name)) => {
            let defaults = BuiltinParams::default();
            let params = BuiltinParams {
                c: source.c,
                delta: source.delta.unwrap_or(defaults.delta),
                big_delta: source.delta_max,
                r: source.r.unwrap_or(defaults.r),
                eps: source.eps,
                ..defaults
            };
            let b = builtin(name, &params)?;
            let spec = SystemSpec { model: b.model, plant: b.plant, certificate: b.certificate, triangular: b.triangular, planar: b.planar };
            Ok(Loaded { name: name.clone(), spec })
        }
        (None, None) => bail!("one of --system or --builtin is required"),
        (Some(_), Some(_)) => bail!("--system and --builtin are mutually exclusive"),
    }
}

fn parse_list(text: &str, what: &str) -> Result<Vec<f64>> {
    text.split(',').map(|v| v.trim().parse::<f64>().with_context(|| format!("{what}: `{}` is not a number", v.trim()))).collect()
}

fn parse_interval(text: &str, what: &str) -> Result<Interval> {
    match parse_list(text, what)?.as_slice() {
        [lo, hi] if lo <= hi => Ok(Interval::new(*lo, *hi)),
        _ => bail!("{what}: expected `lo,hi` with lo <= hi, found `{text}`"),
    }
}

fn parse_region(args: &SamplingArgs, n: usize) -> Result<Region> {
    let parts: Vec<Interval> = args.region.split(';').map(|p| parse_interval(p, "--region")).collect::<Result<_>>()?;
    let bounds = match parts.len() {
        1 => vec![parts[0]; n],
        len if len == n => parts,
        len => bail!("--region has {len} intervals, the system has {n} states"),
    };
    Ok(Region::new(bounds, args.exclude)?)
}

fn budget(args: &SamplingArgs) -> SampleBudget {
    SampleBudget::new(args.grid, args.mc, args.seed)
}

fn json_text<T: Serialize>(value: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(value)? + "\n")
}

fn emit(out: &mut dyn Write, path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, text).with_context(|| format!("cannot write {}", p.display())),
        None => out.write_all(text.as_bytes()).map_err(Into::into),
    }
}

pub fn simulate_cmd(args: &SimulateArgs, out: &mut dyn Write) -> Result<bool> {
    let loaded = load(&args.source)?;
    let model = loaded.model()?;
    let x0 = parse_list(&args.x0, "--x0")?;
    if x0.len() != model.n() {
        bail!("--x0 has {} components, the system has {} states", x0.len(), model.n());
    }
    if !(args.t_final > 0.0 && args.t_final.is_finite()) {
        bail!("--t-final must be positive");
    }
    let mut inputs = Inputs::zero(model);
    if let Some(d) = &args.d {
        inputs.d = parse_signal(d, model.l(), Channel::Bounded, model.d_box(), args.t_final, &mut stream(args.seed, PURPOSE_D, 0))?;
    }
    if let Some(v) = &args.v {
        inputs.v = parse_signal(v, model.m(), Channel::Bounded, model.u_box(), args.t_final, &mut stream(args.seed, PURPOSE_V, 0))?;
    }
    if let Some(dt) = &args.dtilde {
        inputs.dtilde = parse_signal(dt, 1, Channel::Schedule, &[], args.t_final, &mut stream(args.seed, PURPOSE_DTILDE, 0))?;
    }
    let mut cfg = IntegratorConfig::new(args.t_final);
    cfg.blowup_threshold = args.blowup;
    if let Some(step) = args.max_step {
        cfg = cfg.with_max_step(step);
    }
    let traj = simulate(model, &x0, &inputs, &cfg)?;
    let csv = traj.to_csv();
    match &args.out {
        Some(path) => {
            emit(out, Some(path), &csv)?;
            let summary = json!({
                "system": loaded.name,
                "out": path.display().to_string(),
                "rows": traj.times.len(),
                "intervals": traj.sampling_instants.len(),
                "final_time": traj.final_time(),
                "final_state": traj.final_state(),
                "termination": traj.termination,
            });
            emit(out, None, &json_text(&summary)?)?;
        }
        None => emit(out, None, &csv)?,
    }
    Ok(matches!(traj.termination, Termination::Completed))
}

pub fn verify_cmd(args: &VerifyArgs, out: &mut dyn Write) -> Result<bool> {
    let loaded = load(&args.source)?;
    let model = loaded.model()?;
    let cert = loaded.spec.certificate.as_ref().ok_or_else(|| anyhow!("{} has no Lyapunov certificate", loaded.name))?;
    let region = parse_region(&args.sampling, model.n())?;
    let budget = budget(&args.sampling);
    let validation = cert.validate(CLASS_GRID)?;
    let decrease = decrease_check(cert, model, &region, model.r(), &budget)?;
    let sandwich = sandwich_check(cert, model, &region, &budget)?;
    let analytic = analytic_b_check(cert, model, &region, &budget)?;
    let hypotheses = if args.hypotheses {
        let candidates = HypothesisCandidates { growth: None, state_bound: cert.state_bound.clone() };
        Some(check_hypotheses(model, &region, &budget, &candidates)?)
    } else {
        None
    };
    let passed = validation.passed()
        && decrease.iter().all(|r| r.passed())
        && sandwich.passed()
        && analytic.iter().all(|r| r.passed())
        && hypotheses.iter().flatten().all(|h| h.report.passed());
    let mut report = json!({
        "system": loaded.name,
        "r": model.r(),
        "region": region,
        "budget": budget,
        "validation": validation,
        "decrease": decrease,
        "sandwich": sandwich,
        "analytic_b": analytic,
    });
    if let Some(h) = hypotheses {
        report["hypotheses"] = serde_json::to_value(h)?;
    }
    report["passed"] = Value::Bool(passed);
    emit(out, args.out.as_deref(), &json_text(&report)?)?;
    Ok(passed)
}

/// Serialized name of a unit enum variant.
fn variant_name<T: Serialize>(value: &T) -> String {
    match serde_json::to_value(value) {
        Ok(Value::String(s)) => s,
        _ => String::new(),
    }
}

fn masp_text(result: &MASPResult) -> String {
    let mut text = format!("r* = {}\n", result.r_star);
    text.push_str(&format!("status: {}\n", variant_name(&result.status)));
    text.push_str(&format!("method: {}\n", variant_name(&result.method)));
    for c in &result.constraints {
        text.push_str(&format!("  {}: {}{}\n", c.name, c.bound, if c.open { " (open)" } else { "" }));
    }
    if let Some([lo, hi]) = result.bracket {
        text.push_str(&format!("bracket: [{lo}, {hi}] after {} calls\n", result.calls));
    }
    if !result.label.is_empty() {
        text.push_str(&format!("{}\n", result.label));
    }
    text
}

pub fn masp_cmd(args: &MaspArgs, out: &mut dyn Write) -> Result<bool> {
    let result = match (args.closed_form, args.bisect) {
        (Some(ClosedForm::Single), false) => masp_example41_single(args.source.c, args.source.delta.unwrap_or(SINGLE_DEFAULT_DELTA))?,
        (Some(ClosedForm::Vector), false) => masp_example41_vector(args.source.c)?,
        (None, true) => {
            let bracket = parse_interval(args.bracket.as_deref().unwrap_or_default(), "--bracket")?;
            let loaded = load(&args.source)?;
            let model = loaded.model()?;
            let cert = loaded.spec.certificate.as_ref().ok_or_else(|| anyhow!("{} has no Lyapunov certificate", loaded.name))?;
            let region = parse_region(&args.sampling, model.n())?;
            masp_bisection(cert, model, &region, &budget(&args.sampling), bracket.lo, bracket.hi, args.tol)?
        }
        _ => bail!("give exactly one of --closed-form or --bisect"),
    };
    let text = if args.json { json_text(&result)? } else { masp_text(&result) };
    emit(out, None, &text)?;
    Ok(result.status == MaspStatus::Success)
}

pub fn certify_cmd(args: &CertifyArgs, out: &mut dyn Write) -> Result<bool> {
    let loaded = load(&args.source)?;
    let model = loaded.model()?;
    let cert = loaded.spec.certificate.as_ref().ok_or_else(|| anyhow!("{} has no Lyapunov certificate", loaded.name))?;
    let amplitudes = parse_list(&args.amplitudes, "--amplitudes")?;
    let cfg = GainConfig {
        t_tail: args.tail,
        dwell: args.dwell,
        dtilde_amplitude: args.dtilde,
        max_step: args.max_step,
        ..GainConfig::new(args.runs, args.seed, args.t_final)
    };
    let gain = uiss_gain_check(model, cert, &amplitudes, &cfg)?;
    if let Some(path) = &args.csv {
        emit(out, Some(path), &gain.to_csv())?;
    }
    let mut report = json!({ "system": loaded.name, "r": model.r(), "gain": gain });
    if let Some(count) = args.kl_runs {
        let runs = circle_points(model.n(), cfg.x0_radius, count)
            .par_iter()
            .enumerate()
            .map(|(k, x0)| transient_run(model, x0, args.t_final, args.dtilde, args.seed, k as u64))
            .collect::<sdlyap_core::Result<Vec<_>>>()?;
        report["kl"] = serde_json::to_value(kl_fit(&runs)?)?;
    }
    report["passed"] = Value::Bool(gain.passed);
    emit(out, args.out.as_deref(), &json_text(&report)?)?;
    Ok(gain.passed)
}

pub fn lemma_cmd(args: &LemmaArgs, out: &mut dyn Write) -> Result<bool> {
    let rho = ComparisonFunction::parse(&args.rho, FnClass::PositiveDefinite)?;
    let reports: Vec<LemmaReport> = match args.check {
        LemmaCheck::Comparison => (0..args.scenarios)
            .into_par_iter()
            .map(|k| {
                let mut rng = stream(args.seed, PURPOSE_LEMMA, k as u64);
                let (y, u) = comparison_scenario(&rho, &mut rng, args.horizon, args.steps)?;
                comparison_check(&y, &u, &rho, args.tol)
            })
            .collect::<sdlyap_core::Result<_>>()?,
        LemmaCheck::Smallgain => {
            let sigma = sigma_from_rho(&rho)?;
            let a = ComparisonFunction::parse(&args.a, FnClass::K)?;
            (0..args.scenarios)
                .into_par_iter()
                .map(|k| {
                    let mut rng = stream(args.seed, PURPOSE_LEMMA, k as u64);
                    let (y, u) = smallgain_scenario(&sigma, &a, args.m, &mut rng, args.horizon, args.steps)?;
                    smallgain_envelope_check(&y, &u, &sigma, &a, args.m, args.tol)
                })
                .collect::<sdlyap_core::Result<_>>()?
        }
    };
    let failures: Vec<Value> = reports.iter().enumerate().filter(|(_, r)| !r.passed()).map(|(k, r)| json!({ "scenario": k, "report": r })).collect();
    let worst = reports.iter().map(|r| r.worst_margin).fold(f64::INFINITY, f64::min);
    let passed = failures.is_empty();
    let report = json!({
        "check": match args.check { LemmaCheck::Comparison => "comparison", LemmaCheck::Smallgain => "smallgain" },
        "rho": rho.to_string(),
        "scenarios": reports.len(),
        "passed_count": reports.len() - failures.len(),
        "worst_margin": worst,
        "failures": failures,
        "passed": passed,
    });
    emit(out, None, &json_text(&report)?)?;
    Ok(passed)
}

pub fn backstep_cmd(args: &BackstepArgs, out: &mut dyn Write) -> Result<bool> {
    let loaded = load(&args.source)?;
    let budget = budget(&args.sampling);
    let (passed, body) = match args.check {
        BackstepCheck::Dissipation | BackstepCheck::H => {
            let (tri, cert) = loaded.spec.triangular.as_ref().ok_or_else(|| anyhow!("{} has no backstepping design", loaded.name))?;
            let region = parse_region(&args.sampling, tri.n)?;
            if args.check == BackstepCheck::Dissipation {
                let report = check_dissipation(tri, cert, &region, &budget)?;
                (report.passed(), serde_json::to_value(&report)?)
            } else {
                let result = find_h(tri, cert, &region, &budget)?;
                (result.status == Status::Pass, serde_json::to_value(&result)?)
            }
        }
        BackstepCheck::HypothesisP => {
            let planar = loaded.spec.planar.as_ref().ok_or_else(|| anyhow!("{} has no planar hypothesis data", loaded.name))?;
            let base = planar.constants;
            let constants = HypothesisP {
                c: args.hyp_c.unwrap_or(base.c),
                a: args.hyp_a.unwrap_or(base.a),
                l: args.lipschitz.unwrap_or(base.l),
                gamma: args.gamma.unwrap_or(base.gamma),
            };
            let x1 = parse_interval(&args.x1_range, "--x1-range")?;
            let z = parse_interval(&args.z_range, "--z-range")?;
            let reports = check_hypothesis_p(&planar.f1, &planar.f2, &planar.d_box, constants, x1, z, &budget)?;
            (reports.iter().all(|r| r.passed()), json!({ "constants": constants, "reports": reports }))
        }
    };
    let report = json!({
        "system": loaded.name,
        "check": match args.check { BackstepCheck::Dissipation => "dissipation", BackstepCheck::H => "h", BackstepCheck::HypothesisP => "hypothesis-p" },
        "result": body,
        "passed": passed,
    });
    emit(out, None, &json_text(&report)?)?;
    Ok(passed)
}

pub fn plot_data_cmd(args: &PlotDataArgs, out: &mut dyn Write) -> Result<bool> {
    let mut reader = csv::Reader::from_path(&args.input).with_context(|| format!("cannot read {}", args.input.display()))?;
    let headers: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    let t_col = headers.iter().position(|h| h == "t").ok_or_else(|| anyhow!("{} has no `t` column", args.input.display()))?;
    let columns: Vec<String> = match &args.columns {
        Some(list) => list.split(',').map(|c| c.trim().to_string()).filter(|c| c != "t").collect(),
        None => headers.iter().filter(|h| !matches!(h.as_str(), "t" | "interval_index" | "sample")).cloned().collect(),
    };
    let indices: Vec<usize> = columns
        .iter()
        .map(|c| headers.iter().position(|h| h == c).ok_or_else(|| anyhow!("unknown column `{c}`; available: {}", headers.join(", "))))
        .collect::<Result<_>>()?;
    let mut data = vec![String::new(); columns.len()];
    for (line, record) in reader.records().enumerate() {
        let record = record.with_context(|| format!("row {}", line + 2))?;
        let t = &record[t_col];
        for (buf, &j) in data.iter_mut().zip(&indices) {
            buf.push_str(t);
            buf.push(' ');
            buf.push_str(&record[j]);
            buf.push('\n');
        }
    }
    std::fs::create_dir_all(&args.out_dir).with_context(|| format!("cannot create {}", args.out_dir.display()))?;
    for (column, buf) in columns.iter().zip(&data) {
        let path = args.out_dir.join(format!("{}_{column}.dat", args.prefix));
        let text = format!("# t {column}\n{buf}");
        std::fs::write(&path, text).with_context(|| format!("cannot write {}", path.display()))?;
        writeln!(out, "{}", path.display())?;
    }
    Ok(true)
}
