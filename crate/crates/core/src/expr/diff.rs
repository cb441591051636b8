use super::build::{add, call, div, mul, neg, pow, sub};
use super::{Expr, Func, Var};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("`{func}` is not differentiable in `{var}`; supply the gradient explicitly")]
pub struct DiffError {
    pub func: &'static str,
    pub var: String,
}

impl Expr {
    /// Symbolic partial derivative with respect to `var`.
    pub fn differentiate(&self, var: &Var) -> Result<Expr, DiffError> {
        Ok(match self {
            Expr::Num(_) => Expr::Num(0.0),
            Expr::Var(v) => Expr::Num(if v == var { 1.0 } else { 0.0 }),
            Expr::Neg(a) => neg(a.differentiate(var)?),
            Expr::Add(a, b) => add(a.differentiate(var)?, b.differentiate(var)?),
            Expr::Sub(a, b) => sub(a.differentiate(var)?, b.differentiate(var)?),
            Expr::Mul(a, b) => add(
                mul(a.differentiate(var)?, (**b).clone()),
                mul((**a).clone(), b.differentiate(var)?),
            ),
            Expr::Div(a, b) => {
                let da = a.differentiate(var)?;
                let db = b.differentiate(var)?;
                if db.is_zero() {
                    div(da, (**b).clone())
                } else {
                    div(
                        sub(mul(da, (**b).clone()), mul((**a).clone(), db)),
                        pow((**b).clone(), 2.0),
                    )
                }
            }
            Expr::Pow(a, p) => {
                let da = a.differentiate(var)?;
                mul(mul(Expr::Num(*p), pow((**a).clone(), p - 1.0)), da)
            }
            Expr::Call(func, args) => {
                if !self.contains_var(var) {
                    return Ok(Expr::Num(0.0));
                }
                let a = &args[0];
                let da = a.differentiate(var)?;
                let outer = match func {
                    Func::Sin => call(Func::Cos, a.clone()),
                    Func::Cos => neg(call(Func::Sin, a.clone())),
                    Func::Tanh => sub(Expr::Num(1.0), pow(call(Func::Tanh, a.clone()), 2.0)),
                    Func::Exp => call(Func::Exp, a.clone()),
                    Func::Log => div(Expr::Num(1.0), a.clone()),
                    Func::Sqrt => div(Expr::Num(0.5), call(Func::Sqrt, a.clone())),
                    Func::Abs | Func::Sign | Func::Min | Func::Max => {
                        return Err(DiffError { func: func.name(), var: var.to_string() })
                    }
                };
                mul(outer, da)
            }
        })
    }

    /// Gradient with respect to `name[1..=n]`.
    pub fn gradient(&self, name: &str, n: usize) -> Result<Vec<Expr>, DiffError> {
        (1..=n).map(|i| self.differentiate(&Var::indexed(name, i))).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::Env;

    #[test]
    fn half_square_derivative() {
        let e = Expr::parse("x[1]^2/2").unwrap();
        let d = e.differentiate(&Var::indexed("x", 1)).unwrap();
        for x in [-2.0, 0.3, 5.0] {
            assert!((d.eval(&Env::state(&[x])).unwrap() - x).abs() < 1e-15);
        }
    }

    #[test]
    fn chain_rule_matches_hand_result() {
        let e = Expr::parse("(x[2]+0.5*x[1])^2/2").unwrap();
        let d = e.differentiate(&Var::indexed("x", 2)).unwrap();
        let expected = Expr::parse("x[2]+0.5*x[1]").unwrap();
        for p in [[1.0, 2.0], [-3.0, 0.25], [0.0, 0.0]] {
            let env = Env::state(&p);
            assert!((d.eval(&env).unwrap() - expected.eval(&env).unwrap()).abs() < 1e-14);
        }
    }

    #[test]
    fn abs_is_rejected() {
        let e = Expr::parse("abs(x[1])").unwrap();
        let err = e.differentiate(&Var::indexed("x", 1)).unwrap_err();
        assert_eq!(err.func, "abs");
    }

    #[test]
    fn nondifferentiable_primitive_in_other_variable_is_fine() {
        let e = Expr::parse("x[2]*abs(x[1])").unwrap();
        let d = e.differentiate(&Var::indexed("x", 2)).unwrap();
        assert_eq!(d.eval(&Env::state(&[-3.0, 1.0])).unwrap(), 3.0);
    }

    #[test]
    fn constants_vanish() {
        let e = Expr::parse("3*t + sin(2)").unwrap();
        assert_eq!(e.differentiate(&Var::indexed("x", 1)).unwrap(), Expr::Num(0.0));
    }
}
