//! Simulated solutions with their sampling schedule and held values.

use std::fmt::Write as _;

use serde::Serialize;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Termination {
    Completed,
    /// `|x|` exceeded the blow-up threshold at `time`.
    BlowUp { time: f64 },
}

/// A solution of the sampled-data system.
///
/// Row `k` of `times`/`states`/`outputs` belongs to sampling interval
/// `interval_index[k]`; the first row of every interval is its sampling
/// instant, whose stored state is the left limit of the previous interval.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub outputs: Vec<Vec<f64>>,
    pub interval_index: Vec<usize>,
    pub sampling_instants: Vec<f64>,
    pub held_states: Vec<Vec<f64>>,
    pub held_inputs: Vec<Vec<f64>>,
    /// `d̃(τ_i)` per interval.
    pub held_dtilde: Vec<f64>,
    /// `h(x(τ_i))` per interval.
    pub held_h: Vec<f64>,
    pub termination: Termination,
}

impl Trajectory {
    pub fn n(&self) -> usize {
        self.states.first().map_or(0, Vec::len)
    }

    pub fn final_state(&self) -> &[f64] {
        self.states.last().map_or(&[], Vec::as_slice)
    }

    pub fn final_time(&self) -> f64 {
        self.times.last().copied().unwrap_or(0.0)
    }

    pub fn completed(&self) -> bool {
        self.termination == Termination::Completed
    }

    /// True when row `k` is a sampling instant.
    pub fn is_sample(&self, k: usize) -> bool {
        k == 0 || self.interval_index[k] != self.interval_index[k - 1]
    }

    /// Linear interpolation of the state at time `t` inside the stored range.
    pub fn state_at(&self, t: f64) -> Vec<f64> {
        let k = self.times.partition_point(|&s| s <= t);
        if k == 0 {
            return self.states[0].clone();
        }
        if k >= self.times.len() {
            return self.states[self.times.len() - 1].clone();
        }
        let (t0, t1) = (self.times[k - 1], self.times[k]);
        let w = if t1 > t0 { (t - t0) / (t1 - t0) } else { 0.0 };
        self.states[k - 1].iter().zip(&self.states[k]).map(|(a, b)| a + w * (b - a)).collect()
    }

    /// CSV with header `t,x1..xn,y1..yp,interval_index,sample`.
    pub fn to_csv(&self) -> String {
        let n = self.n();
        let p = self.outputs.first().map_or(0, Vec::len);
        let mut out = String::from("t");
        for i in 1..=n {
            write!(out, ",x{i}").unwrap();
        }
        for i in 1..=p {
            write!(out, ",y{i}").unwrap();
        }
        out.push_str(",interval_index,sample\n");
        for k in 0..self.times.len() {
            write!(out, "{}", self.times[k]).unwrap();
            for v in self.states[k].iter().chain(&self.outputs[k]) {
                write!(out, ",{v}").unwrap();
            }
            writeln!(out, ",{},{}", self.interval_index[k], u8::from(self.is_sample(k))).unwrap();
        }
        out
    }
}
