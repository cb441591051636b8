//! Simulation and Lyapunov-based verification of nonlinear sampled-data
//! control systems under zero-order hold.
//!
//! A sampled-data system is integrated interval by interval: at each
//! sampling instant `τ_i` the state and input are held, the next instant is
//! `τ_{i+1} = τ_i + exp(−d̃(τ_i))·h(x(τ_i))`, and the vector field
//! `f(x, x(τ_i), d(t), v(t), v(τ_i))` is integrated across the interval.
//! Lyapunov-based sufficient conditions for input-to-state stability of
//! such loops are checked by dense sampling.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod backstep;
pub mod builtins;
pub mod certify;
pub mod comparison;
pub mod expr;
pub mod lemma;
pub mod masp;
pub mod model;
pub mod report;
pub mod rng;
pub mod signal;
pub mod sim;
pub mod trajectory;
pub mod verify;

pub use comparison::{ComparisonFunction, FnClass, KLFunction};
pub use expr::Expr;
pub use model::{Interval, PlantModel, Region, SystemModel};
pub use report::{SampleBudget, Status, VerificationReport};
pub use signal::Signal;
pub use trajectory::Trajectory;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Parse(#[from] expr::ParseError),
    #[error(transparent)]
    Eval(#[from] expr::EvalError),
    #[error(transparent)]
    Diff(#[from] expr::DiffError),
    #[error(transparent)]
    Comparison(#[from] comparison::ComparisonError),
    #[error("invalid model: {0}")]
    Model(String),
    #[error("input error: {0}")]
    Input(String),
    #[error("verification error: {0}")]
    Verification(String),
    #[error("bracket error: {0}")]
    Bracket(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
