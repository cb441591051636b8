//! Input signals: constant, right-continuous piecewise-constant, or
//! expressions of time.

use rand::Rng;

use crate::expr::{Env, Expr, Role};
use crate::model::Interval;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub enum SignalKind {
    Constant(Vec<f64>),
    /// `values[k]` holds on `[breakpoints[k], breakpoints[k+1])`; the last
    /// value is held forever and the first one also applies before the
    /// first breakpoint.
    Piecewise { breakpoints: Vec<f64>, values: Vec<Vec<f64>> },
    /// One expression of `t` per component.
    Expression(Vec<Expr>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Signal {
    kind: SignalKind,
    codomain: Vec<Interval>,
}

impl Signal {
    pub fn constant(value: Vec<f64>) -> Signal {
        let codomain = value.iter().map(|&v| Interval::point(v)).collect();
        Signal { kind: SignalKind::Constant(value), codomain }
    }

    pub fn zero(dim: usize) -> Signal {
        Signal::constant(vec![0.0; dim])
    }

    pub fn piecewise(breakpoints: Vec<f64>, values: Vec<Vec<f64>>) -> Result<Signal> {
        if breakpoints.is_empty() || breakpoints.len() != values.len() {
            return Err(Error::Input(format!("{} breakpoints but {} values", breakpoints.len(), values.len())));
        }
        if breakpoints.windows(2).any(|w| !(w[0] < w[1])) || breakpoints.iter().any(|b| !b.is_finite()) {
            return Err(Error::Input("breakpoints must be finite and strictly increasing".into()));
        }
        let dim = values[0].len();
        if values.iter().any(|v| v.len() != dim) {
            return Err(Error::Input("all piecewise values must have the same dimension".into()));
        }
        let codomain = (0..dim)
            .map(|j| {
                let (lo, hi) = values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v[j]), hi.max(v[j])));
                Interval::new(lo, hi)
            })
            .collect();
        Ok(Signal { kind: SignalKind::Piecewise { breakpoints, values }, codomain })
    }

    /// Expression-backed signal with an unbounded declared codomain.
    pub fn expression(components: Vec<Expr>) -> Result<Signal> {
        for e in &components {
            if let Some(v) = e.variables().into_iter().find(|v| v.role() != Role::T || v.index().is_some()) {
                return Err(Error::Input(format!("signal expressions may only use `t`, found `{v}`")));
            }
        }
        let codomain = vec![Interval::unbounded(); components.len()];
        Ok(Signal { kind: SignalKind::Expression(components), codomain })
    }

    pub fn parse_expression(texts: &[&str]) -> Result<Signal> {
        Signal::expression(texts.iter().map(|t| Expr::parse(t).map_err(Error::from)).collect::<Result<_>>()?)
    }

    /// Declares the codomain of an expression signal.
    pub fn with_codomain(mut self, codomain: Vec<Interval>) -> Result<Signal> {
        if codomain.len() != self.dim() {
            return Err(Error::Input("codomain dimension mismatch".into()));
        }
        self.codomain = codomain;
        Ok(self)
    }

    /// Piecewise-constant signal on `[0, t_final]` with dwell `dwell`,
    /// each value drawn by `draw`.
    pub fn random_piecewise<R: Rng>(t_final: f64, dwell: f64, rng: &mut R, mut draw: impl FnMut(&mut R) -> Vec<f64>) -> Result<Signal> {
        if !(dwell > 0.0) {
            return Err(Error::Input("dwell must be positive".into()));
        }
        let count = ((t_final / dwell).ceil() as usize).max(1);
        let breakpoints: Vec<f64> = (0..count).map(|k| k as f64 * dwell).collect();
        let values = (0..count).map(|_| draw(rng)).collect();
        Signal::piecewise(breakpoints, values)
    }

    pub fn kind(&self) -> &SignalKind {
        &self.kind
    }

    pub fn codomain(&self) -> &[Interval] {
        &self.codomain
    }

    pub fn dim(&self) -> usize {
        match &self.kind {
            SignalKind::Constant(v) => v.len(),
            SignalKind::Piecewise { values, .. } => values[0].len(),
            SignalKind::Expression(e) => e.len(),
        }
    }

    pub fn eval(&self, t: f64) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.dim()];
        self.eval_into(t, &mut out)?;
        Ok(out)
    }

    pub fn eval_into(&self, t: f64, out: &mut [f64]) -> Result<()> {
        match &self.kind {
            SignalKind::Constant(v) => out.copy_from_slice(v),
            SignalKind::Piecewise { breakpoints, values } => {
                let k = breakpoints.partition_point(|&b| b <= t).saturating_sub(1);
                out.copy_from_slice(&values[k]);
            }
            SignalKind::Expression(es) => {
                let env = Env::time(t);
                for (o, e) in out.iter_mut().zip(es) {
                    *o = e.eval(&env)?;
                }
            }
        }
        Ok(())
    }

    /// Breakpoints strictly inside `(t0, t1)`.
    pub fn breakpoints_between(&self, t0: f64, t1: f64) -> &[f64] {
        match &self.kind {
            SignalKind::Piecewise { breakpoints, .. } => {
                let a = breakpoints.partition_point(|&b| b <= t0);
                let b = breakpoints.partition_point(|&b| b < t1);
                &breakpoints[a..b.max(a)]
            }
            _ => &[],
        }
    }

    /// The shifted signal `t ↦ self(t + θ)`.
    pub fn shifted(&self, theta: f64) -> Result<Signal> {
        match &self.kind {
            SignalKind::Constant(_) => Ok(self.clone()),
            SignalKind::Piecewise { breakpoints, values } => {
                let mut bps = vec![0.0];
                let mut vals = vec![self.eval(theta)?];
                for (b, v) in breakpoints.iter().zip(values) {
                    if b - theta > 0.0 {
                        bps.push(b - theta);
                        vals.push(v.clone());
                    }
                }
                Signal::piecewise(bps, vals)
            }
            SignalKind::Expression(es) => {
                let shift = Expr::Add(Box::new(Expr::Var(crate::expr::Var::scalar("t"))), Box::new(Expr::num(theta)));
                let shifted = es.iter().map(|e| e.substitute(&|v| (v.role() == Role::T).then(|| shift.clone()))).collect();
                Ok(Signal { kind: SignalKind::Expression(shifted), codomain: self.codomain.clone() })
            }
        }
    }

    /// Largest Euclidean norm of the signal on `[t0, t1]`, exact for constant
    /// and piecewise kinds and sampled for expressions.
    pub fn sup_norm(&self, t0: f64, t1: f64) -> Result<f64> {
        let norm = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>().sqrt();
        match &self.kind {
            SignalKind::Constant(v) => Ok(norm(v)),
            SignalKind::Piecewise { breakpoints, values } => {
                let first = breakpoints.partition_point(|&b| b <= t0).saturating_sub(1);
                let last = breakpoints.partition_point(|&b| b <= t1).saturating_sub(1);
                Ok(values[first..=last.max(first)].iter().map(|v| norm(v)).fold(0.0, f64::max))
            }
            SignalKind::Expression(_) => {
                let k = 1000;
                let mut best: f64 = 0.0;
                for i in 0..=k {
                    let t = t0 + (t1 - t0) * i as f64 / k as f64;
                    best = best.max(norm(&self.eval(t)?));
                }
                Ok(best)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_signal() {
        assert_eq!(Signal::constant(vec![0.5]).eval(3.7).unwrap(), vec![0.5]);
    }

    #[test]
    fn piecewise_is_right_continuous() {
        let s = Signal::piecewise(vec![0.0, 1.0, 2.0], vec![vec![1.0], vec![-1.0], vec![1.0]]).unwrap();
        assert_eq!(s.eval(1.0).unwrap(), vec![-1.0]);
        assert_eq!(s.eval(0.999).unwrap(), vec![1.0]);
        assert_eq!(s.eval(50.0).unwrap(), vec![1.0]);
        assert_eq!(s.breakpoints_between(0.0, 2.0), &[1.0]);
        assert_eq!(s.breakpoints_between(0.5, 5.0), &[1.0, 2.0]);
        assert_eq!(s.codomain(), &[Interval::new(-1.0, 1.0)]);
    }

    #[test]
    fn expression_signal() {
        let s = Signal::parse_expression(&["sin(t)"]).unwrap();
        assert_eq!(s.eval(0.0).unwrap(), vec![0.0]);
        assert!(Signal::parse_expression(&["x[1]"]).is_err());
    }

    #[test]
    fn invalid_breakpoints() {
        assert!(Signal::piecewise(vec![0.0, 0.0], vec![vec![1.0], vec![2.0]]).is_err());
        assert!(Signal::piecewise(vec![0.0], vec![]).is_err());
    }

    #[test]
    fn shift_matches_definition() {
        let s = Signal::piecewise(vec![0.0, 0.3, 0.6, 0.9], vec![vec![0.0], vec![1.0], vec![0.0], vec![1.0]]).unwrap();
        let p = s.shifted(0.7).unwrap();
        for t in [0.0, 0.1, 0.2, 0.25, 1.0, 3.0] {
            assert_eq!(p.eval(t).unwrap(), s.eval(t + 0.7).unwrap(), "t = {t}");
        }
        let e = Signal::parse_expression(&["sin(t)"]).unwrap().shifted(1.5).unwrap();
        assert!((e.eval(0.5).unwrap()[0] - 2f64.sin()).abs() < 1e-15);
    }

    #[test]
    fn sup_norm_of_window() {
        let s = Signal::piecewise(vec![0.0, 1.0, 2.0], vec![vec![0.2], vec![-3.0], vec![0.5]]).unwrap();
        assert_eq!(s.sup_norm(0.0, 0.5).unwrap(), 0.2);
        assert_eq!(s.sup_norm(0.0, 1.0).unwrap(), 3.0);
        assert_eq!(s.sup_norm(2.5, 9.0).unwrap(), 0.5);
    }
}
