//! Argument definitions.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "sdlyap", version, about = "Simulation and Lyapunov verification of sampled-data control systems")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Integrate the closed loop and write the trajectory as CSV.
    Simulate(SimulateArgs),
    /// Check a Lyapunov certificate by dense sampling.
    Verify(VerifyArgs),
    /// Maximal allowable sampling period.
    Masp(MaspArgs),
    /// Monte Carlo checks of the stability certificates.
    Certify(CertifyArgs),
    /// Randomized checks of the comparison and small-gain lemmas.
    Lemma(LemmaArgs),
    /// Backstepping design checks.
    Backstep(BackstepArgs),
    /// Split a trajectory CSV into two-column data files.
    PlotData(PlotDataArgs),
}

/// Where the system comes from.
#[derive(Debug, Clone, Args)]
pub struct Source {
    /// JSON system specification.
    #[arg(long, value_name = "PATH", conflicts_with = "builtin")]
    pub system: Option<PathBuf>,
    /// Catalog entry: ex41, ex41-single, ex41-vector, scalar-hold, ex412, backstep-scalar.
    #[arg(long, value_name = "NAME")]
    pub builtin: Option<String>,
    /// Razumikhin constant of the catalog certificates.
    #[arg(long, default_value_t = 1.1)]
    pub c: f64,
    /// Lower end of the first disturbance interval.
    #[arg(long)]
    pub delta: Option<f64>,
    /// Upper end of the first disturbance interval.
    #[arg(long, default_value_t = 1.0)]
    pub delta_max: f64,
    /// Decrease rate of scalar-hold.
    #[arg(long, default_value_t = 0.1)]
    pub eps: f64,
    /// Constant sampling period, replacing the one of the system.
    #[arg(long)]
    pub r: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub source: Source,
    /// Initial state, comma separated.
    #[arg(long, allow_hyphen_values = true)]
    pub x0: String,
    #[arg(long, default_value_t = 10.0)]
    pub t_final: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Disturbance signal.
    #[arg(long, allow_hyphen_values = true)]
    pub d: Option<String>,
    /// Input-error signal.
    #[arg(long, allow_hyphen_values = true)]
    pub v: Option<String>,
    /// Sampling-schedule perturbation.
    #[arg(long, allow_hyphen_values = true)]
    pub dtilde: Option<String>,
    #[arg(long)]
    pub max_step: Option<f64>,
    #[arg(long, default_value_t = 1e8)]
    pub blowup: f64,
    /// Trajectory CSV; stdout when absent.
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct SamplingArgs {
    /// Box `lo,hi[;lo,hi...]`; one interval is repeated across axes.
    #[arg(long, default_value = "-5,5", allow_hyphen_values = true)]
    pub region: String,
    /// Radius of the excluded ball around the origin.
    #[arg(long, default_value_t = 0.0)]
    pub exclude: f64,
    /// Grid points per axis.
    #[arg(long, default_value_t = 41)]
    pub grid: usize,
    /// Monte Carlo samples per grid point.
    #[arg(long, default_value_t = 2000)]
    pub mc: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub source: Source,
    #[command(flatten)]
    pub sampling: SamplingArgs,
    /// Also check the standing hypotheses.
    #[arg(long)]
    pub hypotheses: bool,
    /// Report file; stdout when absent.
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ClosedForm {
    Single,
    Vector,
}

#[derive(Debug, Clone, Args)]
pub struct MaspArgs {
    #[command(flatten)]
    pub source: Source,
    #[arg(long, conflicts_with = "bisect")]
    pub closed_form: Option<ClosedForm>,
    /// Empirical bisection of the decrease condition.
    #[arg(long, requires = "bracket")]
    pub bisect: bool,
    /// `lo,hi`
    #[arg(long)]
    pub bracket: Option<String>,
    /// Relative bracket width at termination.
    #[arg(long, default_value_t = 1e-2)]
    pub tol: f64,
    #[command(flatten)]
    pub sampling: SamplingArgs,
    /// JSON instead of text output.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Clone, Args)]
pub struct CertifyArgs {
    #[command(flatten)]
    pub source: Source,
    /// Amplitudes of the input error, comma separated.
    #[arg(long, default_value = "0,0.1,0.5")]
    pub amplitudes: String,
    #[arg(long, default_value_t = 20)]
    pub runs: usize,
    /// Start of the tail window; the last third of the horizon by default.
    #[arg(long)]
    pub tail: Option<f64>,
    #[arg(long, default_value_t = 30.0)]
    pub t_final: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Amplitude of the sampling-schedule perturbation.
    #[arg(long, default_value_t = 0.0)]
    pub dtilde: f64,
    /// Dwell of the random signals.
    #[arg(long, default_value_t = 0.3)]
    pub dwell: f64,
    #[arg(long)]
    pub max_step: Option<f64>,
    /// Per-amplitude CSV table.
    #[arg(long, value_name = "PATH")]
    pub csv: Option<PathBuf>,
    /// Also fit an exponential transient bound from this many zero-input runs.
    #[arg(long)]
    pub kl_runs: Option<usize>,
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LemmaCheck {
    Comparison,
    Smallgain,
}

#[derive(Debug, Clone, Args)]
pub struct LemmaArgs {
    /// Positive definite rate `ρ(s)`.
    #[arg(long, default_value = "s")]
    pub rho: String,
    #[arg(long, value_enum)]
    pub check: LemmaCheck,
    #[arg(long, default_value_t = 100)]
    pub scenarios: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 5.0)]
    pub horizon: f64,
    #[arg(long, default_value_t = 200)]
    pub steps: usize,
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
    /// Gain `a(s)` of the small-gain check.
    #[arg(long, default_value = "s/2")]
    pub a: String,
    /// Initial bound of the small-gain check.
    #[arg(long, default_value_t = 1.0)]
    pub m: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BackstepCheck {
    Dissipation,
    H,
    HypothesisP,
}

#[derive(Debug, Clone, Args)]
pub struct BackstepArgs {
    #[command(flatten)]
    pub source: Source,
    #[arg(long, value_enum)]
    pub check: BackstepCheck,
    #[command(flatten)]
    pub sampling: SamplingArgs,
    #[arg(long, default_value = "-5,5", allow_hyphen_values = true)]
    pub x1_range: String,
    #[arg(long, default_value = "-3,3", allow_hyphen_values = true)]
    pub z_range: String,
    /// Override of the constant `c` of hypothesis (P).
    #[arg(long)]
    pub hyp_c: Option<f64>,
    #[arg(long)]
    pub hyp_a: Option<f64>,
    #[arg(long)]
    pub lipschitz: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct PlotDataArgs {
    /// Trajectory CSV.
    #[arg(long = "in", value_name = "PATH")]
    pub input: PathBuf,
    /// Columns to emit against `t`; every state and output column by default.
    #[arg(long)]
    pub columns: Option<String>,
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
    #[arg(long, default_value = "traj")]
    pub prefix: String,
}
