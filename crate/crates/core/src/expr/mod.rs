//! Expression language for vector fields, output maps, Lyapunov functions and
//! comparison functions.
//!
//! Expressions are small ASTs over real literals, role-namespaced variables
//! (`x[1]`, `xs[2]`, `d[1]`, `v[1]`, `vs[1]`, `t`, `s`, ...), the arithmetic
//! operators `+ - * / ^` and a fixed function vocabulary. Exponents are
//! always constants so that symbolic differentiation stays closed-form.
//!
//! ```
//! use sdlyap_core::expr::{Expr, Env};
//!
//! let e = Expr::parse("x[1]^2/2").unwrap();
//! let x = [3.0];
//! assert_eq!(e.eval(&Env { x: &x, ..Env::default() }).unwrap(), 4.5);
//! ```

mod compile;
mod diff;
mod eval;
mod parse;

use std::collections::BTreeSet;
use std::fmt;

pub use compile::Compiled;
pub use diff::DiffError;
pub use eval::{Bindings, Env, EvalError};
pub use parse::ParseError;

/// Built-in functions. `min` and `max` are binary, the rest unary.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Func {
    Sin,
    Cos,
    Tanh,
    Exp,
    Log,
    Sqrt,
    Abs,
    Sign,
    Min,
    Max,
}

impl Func {
    pub fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "tanh" => Func::Tanh,
            "exp" => Func::Exp,
            "log" => Func::Log,
            "sqrt" => Func::Sqrt,
            "abs" => Func::Abs,
            "sign" => Func::Sign,
            "min" => Func::Min,
            "max" => Func::Max,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Tanh => "tanh",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
            Func::Abs => "abs",
            Func::Sign => "sign",
            Func::Min => "min",
            Func::Max => "max",
        }
    }

    pub fn arity(self) -> usize {
        match self {
            Func::Min | Func::Max => 2,
            _ => 1,
        }
    }
}

/// Variable role. The role decides which slot of an [`Env`] binds it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Role {
    /// Current state `x`.
    X,
    /// State held at the last sampling instant `xs`.
    Xs,
    /// Held-state candidate used by the verifier `x0`.
    X0,
    /// Disturbance `d`.
    D,
    /// Actuator input `v`.
    V,
    /// Actuator input held at the last sampling instant `vs`.
    Vs,
    /// Held input candidate used by the verifier `v0`.
    V0,
    /// Open-loop control input `u`.
    U,
    /// Measurement error `e`.
    E,
    /// Time `t`.
    T,
    /// Scalar argument of comparison functions `s`.
    S,
    /// Anything else; bound only through name-keyed bindings.
    Other,
}

impl Role {
    fn of(name: &str) -> Role {
        match name {
            "x" => Role::X,
            "xs" => Role::Xs,
            "x0" => Role::X0,
            "d" => Role::D,
            "v" => Role::V,
            "vs" => Role::Vs,
            "v0" => Role::V0,
            "u" => Role::U,
            "e" => Role::E,
            "t" => Role::T,
            "s" => Role::S,
            _ => Role::Other,
        }
    }
}

/// A variable reference such as `x[2]` or `t`. Indices are 1-based.
#[derive(Clone, Debug)]
pub struct Var {
    name: String,
    index: Option<usize>,
    role: Role,
}

impl Var {
    pub fn new(name: impl Into<String>, index: Option<usize>) -> Var {
        let name = name.into();
        let role = Role::of(&name);
        Var { name, index, role }
    }

    /// Indexed variable, e.g. `Var::indexed("x", 1)` is `x[1]`.
    pub fn indexed(name: &str, index: usize) -> Var {
        Var::new(name, Some(index))
    }

    pub fn scalar(name: &str) -> Var {
        Var::new(name, None)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn index(&self) -> Option<usize> {
        self.index
    }

    pub fn role(&self) -> Role {
        self.role
    }
}

impl PartialEq for Var {
    fn eq(&self, other: &Var) -> bool {
        self.name == other.name && self.index == other.index
    }
}

impl Eq for Var {}

impl PartialOrd for Var {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Var {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (&self.name, self.index).cmp(&(&other.name, other.index))
    }
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.index {
            Some(i) => write!(f, "{}[{}]", self.name, i),
            None => f.write_str(&self.name),
        }
    }
}

/// Expression tree.
#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(Var),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    /// Power with a constant exponent.
    Pow(Box<Expr>, f64),
    Call(Func, Vec<Expr>),
}

impl Expr {
    pub fn parse(text: &str) -> Result<Expr, ParseError> {
        parse::parse(text)
    }

    pub fn num(value: f64) -> Expr {
        Expr::Num(value)
    }

    pub fn var(name: &str, index: usize) -> Expr {
        Expr::Var(Var::indexed(name, index))
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Expr::Num(v) if *v == 0.0)
    }

    pub fn as_constant(&self) -> Option<f64> {
        match self {
            Expr::Num(v) => Some(*v),
            _ => None,
        }
    }

    /// All distinct free variables, sorted by name then index.
    pub fn variables(&self) -> BTreeSet<Var> {
        let mut out = BTreeSet::new();
        self.visit_vars(&mut |v| {
            out.insert(v.clone());
        });
        out
    }

    pub fn contains_var(&self, var: &Var) -> bool {
        let mut found = false;
        self.visit_vars(&mut |v| found |= v == var);
        found
    }

    fn visit_vars(&self, f: &mut dyn FnMut(&Var)) {
        match self {
            Expr::Num(_) => {}
            Expr::Var(v) => f(v),
            Expr::Neg(a) | Expr::Pow(a, _) => a.visit_vars(f),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => {
                a.visit_vars(f);
                b.visit_vars(f);
            }
            Expr::Call(_, args) => args.iter().for_each(|a| a.visit_vars(f)),
        }
    }

    /// Replaces variables for which `map` returns `Some`. The result is
    /// lightly simplified (identity elements and constant folding).
    pub fn substitute(&self, map: &dyn Fn(&Var) -> Option<Expr>) -> Expr {
        match self {
            Expr::Num(v) => Expr::Num(*v),
            Expr::Var(v) => map(v).unwrap_or_else(|| Expr::Var(v.clone())),
            Expr::Neg(a) => build::neg(a.substitute(map)),
            Expr::Add(a, b) => build::add(a.substitute(map), b.substitute(map)),
            Expr::Sub(a, b) => build::sub(a.substitute(map), b.substitute(map)),
            Expr::Mul(a, b) => build::mul(a.substitute(map), b.substitute(map)),
            Expr::Div(a, b) => build::div(a.substitute(map), b.substitute(map)),
            Expr::Pow(a, p) => build::pow(a.substitute(map), *p),
            Expr::Call(func, args) => {
                Expr::Call(*func, args.iter().map(|a| a.substitute(map)).collect())
            }
        }
    }

    /// Renames every variable of role `from` to `to`, keeping indices.
    pub fn rename_role(&self, from: &str, to: &str) -> Expr {
        self.substitute(&|v| {
            (v.name() == from).then(|| Expr::Var(Var::new(to, v.index())))
        })
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Add(..) | Expr::Sub(..) => 1,
            Expr::Mul(..) | Expr::Div(..) => 2,
            Expr::Neg(_) => 3,
            Expr::Num(v) if v.is_sign_negative() => 3,
            Expr::Pow(..) => 4,
            _ => 5,
        }
    }
}

/// Simplifying constructors used by substitution and differentiation.
pub mod build {
    use super::{Expr, Func};

    pub fn neg(a: Expr) -> Expr {
        match a {
            Expr::Num(v) => Expr::Num(-v),
            Expr::Neg(inner) => *inner,
            other => Expr::Neg(Box::new(other)),
        }
    }

    pub fn add(a: Expr, b: Expr) -> Expr {
        match (&a, &b) {
            (Expr::Num(x), Expr::Num(y)) => Expr::Num(x + y),
            _ if a.is_zero() => b,
            _ if b.is_zero() => a,
            _ => Expr::Add(Box::new(a), Box::new(b)),
        }
    }

    pub fn sub(a: Expr, b: Expr) -> Expr {
        match (&a, &b) {
            (Expr::Num(x), Expr::Num(y)) => Expr::Num(x - y),
            _ if b.is_zero() => a,
            _ if a.is_zero() => neg(b),
            _ => Expr::Sub(Box::new(a), Box::new(b)),
        }
    }

    pub fn mul(a: Expr, b: Expr) -> Expr {
        match (&a, &b) {
            (Expr::Num(x), Expr::Num(y)) => Expr::Num(x * y),
            _ if a.is_zero() || b.is_zero() => Expr::Num(0.0),
            (Expr::Num(x), _) if *x == 1.0 => b,
            (_, Expr::Num(y)) if *y == 1.0 => a,
            (Expr::Num(x), _) if *x == -1.0 => neg(b),
            (_, Expr::Num(y)) if *y == -1.0 => neg(a),
            _ => Expr::Mul(Box::new(a), Box::new(b)),
        }
    }

    pub fn div(a: Expr, b: Expr) -> Expr {
        match (&a, &b) {
            (Expr::Num(x), Expr::Num(y)) if *y != 0.0 => Expr::Num(x / y),
            _ if a.is_zero() => Expr::Num(0.0),
            (_, Expr::Num(y)) if *y == 1.0 => a,
            _ => Expr::Div(Box::new(a), Box::new(b)),
        }
    }

    pub fn pow(a: Expr, p: f64) -> Expr {
        if p == 0.0 {
            return Expr::Num(1.0);
        }
        if p == 1.0 {
            return a;
        }
        match a {
            Expr::Num(x) if x.powf(p).is_finite() => Expr::Num(x.powf(p)),
            other => Expr::Pow(Box::new(other), p),
        }
    }

    pub fn call(func: Func, arg: Expr) -> Expr {
        Expr::Call(func, vec![arg])
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn child(f: &mut fmt::Formatter<'_>, e: &Expr, parens: bool) -> fmt::Result {
            if parens {
                write!(f, "({e})")
            } else {
                write!(f, "{e}")
            }
        }
        let p = self.precedence();
        match self {
            Expr::Num(v) => write!(f, "{v}"),
            Expr::Var(v) => write!(f, "{v}"),
            Expr::Neg(a) => {
                f.write_str("-")?;
                // `-(2)` keeps a negated literal distinct from the literal -2.
                let parens = a.precedence() < p || matches!(**a, Expr::Num(_));
                child(f, a, parens)
            }
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => {
                let op = match self {
                    Expr::Add(..) => " + ",
                    Expr::Sub(..) => " - ",
                    Expr::Mul(..) => " * ",
                    _ => " / ",
                };
                child(f, a, a.precedence() < p)?;
                f.write_str(op)?;
                child(f, b, b.precedence() <= p)
            }
            Expr::Pow(a, e) => {
                child(f, a, a.precedence() <= p)?;
                if *e >= 0.0 {
                    write!(f, "^{e}")
                } else {
                    write!(f, "^({e})")
                }
            }
            Expr::Call(func, args) => {
                write!(f, "{}(", func.name())?;
                for (k, a) in args.iter().enumerate() {
                    if k > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{a}")?;
                }
                f.write_str(")")
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn display_round_trips_tricky_cases() {
        let cases = [
            "-x[1]^2",
            "(-x[1])^2",
            "x[1] - (x[2] - 3)",
            "x[1] / (x[2] * 2)",
            "2^3^2",
            "x[1]^(-1)",
            "-(2)",
            "- -x[1]",
            "min(x[1], max(0, v[1]))",
        ];
        for c in cases {
            let e = Expr::parse(c).unwrap();
            let again = Expr::parse(&e.to_string()).unwrap();
            assert_eq!(e, again, "{c} printed as {e}");
        }
    }

    #[test]
    fn constructed_negative_literals_round_trip() {
        let e = Expr::Pow(Box::new(Expr::Num(-2.0)), 2.0);
        assert_eq!(Expr::parse(&e.to_string()).unwrap(), e);
        let e = Expr::Neg(Box::new(Expr::Num(2.0)));
        assert_eq!(Expr::parse(&e.to_string()).unwrap(), e);
        let e = Expr::Sub(Box::new(Expr::var("x", 1)), Box::new(Expr::Num(-2.0)));
        assert_eq!(Expr::parse(&e.to_string()).unwrap(), e);
    }

    #[test]
    fn substitution_simplifies_zero_feedback() {
        let f = Expr::parse("x[2] + u[1]").unwrap();
        let g = f.substitute(&|v| (v.name() == "u").then(|| build::add(Expr::Num(0.0), Expr::var("v", 1))));
        assert_eq!(g, Expr::parse("x[2] + v[1]").unwrap());
    }

    #[test]
    fn variables_are_sorted_and_distinct() {
        let e = Expr::parse("x[2]*x[1] + x[1] + d[1]").unwrap();
        let names: Vec<String> = e.variables().iter().map(|v| v.to_string()).collect();
        assert_eq!(names, ["d[1]", "x[1]", "x[2]"]);
    }
}
