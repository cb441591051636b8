//! Sampling budgets and falsification reports.

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleBudget {
    pub grid_per_axis: usize,
    pub mc_samples: usize,
    pub seed: u64,
}

impl SampleBudget {
    pub fn new(grid_per_axis: usize, mc_samples: usize, seed: u64) -> SampleBudget {
        SampleBudget { grid_per_axis, mc_samples, seed }
    }

    pub fn validate(&self) -> crate::Result<()> {
        if self.grid_per_axis == 0 || self.mc_samples == 0 {
            return Err(crate::Error::Input("grid_per_axis and mc_samples must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
}

/// Inputs at which the worst margin was observed.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub x: Vec<f64>,
    pub x0: Vec<f64>,
    pub d: Vec<f64>,
    pub v: Vec<f64>,
    pub v0: Vec<f64>,
}

/// Result of a sampled check. A pass only means no counterexample was
/// found under the budget.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub condition: String,
    pub status: Status,
    pub worst_margin: f64,
    pub witness: Option<Witness>,
    pub budget: SampleBudget,
    pub samples: u64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl VerificationReport {
    pub fn passed(&self) -> bool {
        self.status == Status::Pass
    }
}

/// Running minimum of margins with the failure tolerance
/// `margin ≥ −1e-9·(1 + scale)`.
#[derive(Clone, Debug)]
pub struct MarginTracker {
    pub worst_margin: f64,
    pub witness: Option<Witness>,
    pub samples: u64,
    pub violated: bool,
}

impl Default for MarginTracker {
    fn default() -> Self {
        MarginTracker { worst_margin: f64::INFINITY, witness: None, samples: 0, violated: false }
    }
}

pub const MARGIN_TOL: f64 = 1e-9;

impl MarginTracker {
    /// Records `margin`; `scale` sets the magnitude of the tolerance.
    #[inline]
    pub fn record(&mut self, margin: f64, scale: f64, witness: impl FnOnce() -> Witness) {
        self.samples += 1;
        let violation = margin < -MARGIN_TOL * (1.0 + scale.abs());
        if margin < self.worst_margin || (violation && !self.violated) {
            self.worst_margin = margin;
            self.witness = Some(witness());
        }
        self.violated |= violation;
    }

    pub fn merge(&mut self, other: MarginTracker) {
        self.samples += other.samples;
        self.violated |= other.violated;
        if other.worst_margin < self.worst_margin {
            self.worst_margin = other.worst_margin;
            self.witness = other.witness;
        }
    }

    pub fn into_report(self, condition: impl Into<String>, budget: SampleBudget, notes: Vec<String>) -> VerificationReport {
        let worst_margin = if self.worst_margin.is_finite() { self.worst_margin } else { 0.0 };
        // a violation may be within tolerance of the minimum but not equal to it
        let status = if self.violated && worst_margin < 0.0 { Status::Fail } else { Status::Pass };
        VerificationReport {
            condition: condition.into(),
            status,
            worst_margin,
            witness: self.witness,
            budget,
            samples: self.samples,
            notes,
        }
    }
}
