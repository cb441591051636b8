use std::collections::HashMap;

use super::{Expr, Func, Role, Var};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("unbound variable `{0}`")]
    Unbound(String),
    #[error("numeric domain error in {0}")]
    Domain(String),
}

/// Source of variable values during evaluation.
pub trait Bindings {
    fn lookup(&self, var: &Var) -> Option<f64>;
}

/// Positional bindings grouped by role. Indexed variables read slot
/// `index - 1` of the matching slice.
#[derive(Clone, Copy, Debug, Default)]
pub struct Env<'a> {
    pub x: &'a [f64],
    pub xs: &'a [f64],
    pub x0: &'a [f64],
    pub d: &'a [f64],
    pub v: &'a [f64],
    pub vs: &'a [f64],
    pub v0: &'a [f64],
    pub u: &'a [f64],
    pub e: &'a [f64],
    pub t: Option<f64>,
    pub s: Option<f64>,
}

impl<'a> Env<'a> {
    pub fn state(x: &'a [f64]) -> Env<'a> {
        Env { x, ..Env::default() }
    }

    pub fn scalar(s: f64) -> Env<'static> {
        Env { s: Some(s), ..Env::default() }
    }

    pub fn time(t: f64) -> Env<'static> {
        Env { t: Some(t), ..Env::default() }
    }
}

impl Bindings for Env<'_> {
    #[inline]
    fn lookup(&self, var: &Var) -> Option<f64> {
        let slot = |slice: &[f64]| var.index.and_then(|i| slice.get(i - 1).copied());
        match var.role {
            Role::X => slot(self.x),
            Role::Xs => slot(self.xs),
            Role::X0 => slot(self.x0),
            Role::D => slot(self.d),
            Role::V => slot(self.v),
            Role::Vs => slot(self.vs),
            Role::V0 => slot(self.v0),
            Role::U => slot(self.u),
            Role::E => slot(self.e),
            Role::T if var.index.is_none() => self.t,
            Role::S if var.index.is_none() => self.s,
            _ => None,
        }
    }
}

/// Name-keyed bindings, keys written as printed (`"x[1]"`, `"t"`).
impl Bindings for HashMap<String, f64> {
    fn lookup(&self, var: &Var) -> Option<f64> {
        self.get(&var.to_string()).copied()
    }
}

fn checked(value: f64, op: &str) -> Result<f64, EvalError> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(EvalError::Domain(op.to_string()))
    }
}

impl Expr {
    pub fn eval<B: Bindings + ?Sized>(&self, env: &B) -> Result<f64, EvalError> {
        match self {
            Expr::Num(v) => Ok(*v),
            Expr::Var(var) => env.lookup(var).ok_or_else(|| EvalError::Unbound(var.to_string())),
            Expr::Neg(a) => Ok(-a.eval(env)?),
            Expr::Add(a, b) => checked(a.eval(env)? + b.eval(env)?, "+"),
            Expr::Sub(a, b) => checked(a.eval(env)? - b.eval(env)?, "-"),
            Expr::Mul(a, b) => checked(a.eval(env)? * b.eval(env)?, "*"),
            Expr::Div(a, b) => checked(a.eval(env)? / b.eval(env)?, "/"),
            Expr::Pow(a, p) => {
                let base = a.eval(env)?;
                let value = if p.fract() == 0.0 && p.abs() <= i32::MAX as f64 {
                    base.powi(*p as i32)
                } else {
                    base.powf(*p)
                };
                checked(value, "^")
            }
            Expr::Call(func, args) => {
                let a = args[0].eval(env)?;
                let value = match func {
                    Func::Sin => a.sin(),
                    Func::Cos => a.cos(),
                    Func::Tanh => a.tanh(),
                    Func::Exp => a.exp(),
                    Func::Log => a.ln(),
                    Func::Sqrt => a.sqrt(),
                    Func::Abs => a.abs(),
                    Func::Sign => {
                        if a > 0.0 {
                            1.0
                        } else if a < 0.0 {
                            -1.0
                        } else {
                            0.0
                        }
                    }
                    Func::Min => a.min(args[1].eval(env)?),
                    Func::Max => a.max(args[1].eval(env)?),
                };
                checked(value, func.name())
            }
        }
    }
}
