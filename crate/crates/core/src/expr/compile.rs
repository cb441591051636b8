use super::{EvalError, Expr, Func, Var};

const INLINE_STACK: usize = 48;

#[derive(Clone, Copy, Debug, PartialEq)]
enum Op {
    Const(f64),
    Load(usize),
    Neg,
    Add,
    Sub,
    Mul,
    Div,
    Powi(i32),
    Powf(f64),
    Call(Func),
    Min,
    Max,
}

/// An expression flattened into a stack program whose variables read fixed
/// slots of an input slice. Much faster than tree evaluation in hot loops.
#[derive(Clone, Debug, PartialEq)]
pub struct Compiled {
    ops: Vec<Op>,
    depth: usize,
}

impl Compiled {
    /// Compiles `expr`; `slot` maps each variable to its input index.
    pub fn new(expr: &Expr, slot: &dyn Fn(&Var) -> Option<usize>) -> Result<Compiled, EvalError> {
        let mut ops = Vec::new();
        emit(expr, slot, &mut ops)?;
        let mut depth = 0usize;
        let mut max_depth = 0usize;
        for op in &ops {
            match op {
                Op::Const(_) | Op::Load(_) => depth += 1,
                Op::Add | Op::Sub | Op::Mul | Op::Div | Op::Min | Op::Max => depth -= 1,
                _ => {}
            }
            max_depth = max_depth.max(depth);
        }
        Ok(Compiled { ops, depth: max_depth })
    }

    pub fn constant(value: f64) -> Compiled {
        Compiled { ops: vec![Op::Const(value)], depth: 1 }
    }

    pub fn eval(&self, input: &[f64]) -> Result<f64, EvalError> {
        let value = if self.depth <= INLINE_STACK {
            let mut stack = [0.0f64; INLINE_STACK];
            run(&self.ops, input, &mut stack)
        } else {
            let mut stack = vec![0.0f64; self.depth];
            run(&self.ops, input, &mut stack)
        };
        if value.is_finite() {
            Ok(value)
        } else {
            Err(EvalError::Domain("compiled expression".into()))
        }
    }
}

#[inline]
fn run(ops: &[Op], input: &[f64], stack: &mut [f64]) -> f64 {
    let mut sp = 0usize;
    for op in ops {
        match *op {
            Op::Const(c) => {
                stack[sp] = c;
                sp += 1;
            }
            Op::Load(i) => {
                stack[sp] = input[i];
                sp += 1;
            }
            Op::Neg => stack[sp - 1] = -stack[sp - 1],
            Op::Powi(p) => stack[sp - 1] = stack[sp - 1].powi(p),
            Op::Powf(p) => stack[sp - 1] = stack[sp - 1].powf(p),
            Op::Call(f) => {
                let a = stack[sp - 1];
                stack[sp - 1] = match f {
                    Func::Sin => a.sin(),
                    Func::Cos => a.cos(),
                    Func::Tanh => a.tanh(),
                    Func::Exp => a.exp(),
                    Func::Log => {
                        if a > 0.0 {
                            a.ln()
                        } else {
                            f64::NAN
                        }
                    }
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
                    Func::Min | Func::Max => unreachable!("binary functions use dedicated ops"),
                };
            }
            _ => {
                sp -= 1;
                let b = stack[sp];
                let a = stack[sp - 1];
                stack[sp - 1] = match *op {
                    Op::Add => a + b,
                    Op::Sub => a - b,
                    Op::Mul => a * b,
                    Op::Div => a / b,
                    Op::Min => a.min(b),
                    Op::Max => a.max(b),
                    _ => unreachable!(),
                };
            }
        }
    }
    stack[0]
}

fn emit(expr: &Expr, slot: &dyn Fn(&Var) -> Option<usize>, ops: &mut Vec<Op>) -> Result<(), EvalError> {
    match expr {
        Expr::Num(v) => ops.push(Op::Const(*v)),
        Expr::Var(v) => ops.push(Op::Load(slot(v).ok_or_else(|| EvalError::Unbound(v.to_string()))?)),
        Expr::Neg(a) => {
            emit(a, slot, ops)?;
            ops.push(Op::Neg);
        }
        Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => {
            emit(a, slot, ops)?;
            emit(b, slot, ops)?;
            ops.push(match expr {
                Expr::Add(..) => Op::Add,
                Expr::Sub(..) => Op::Sub,
                Expr::Mul(..) => Op::Mul,
                _ => Op::Div,
            });
        }
        Expr::Pow(a, p) => {
            emit(a, slot, ops)?;
            ops.push(if p.fract() == 0.0 && p.abs() <= i32::MAX as f64 { Op::Powi(*p as i32) } else { Op::Powf(*p) });
        }
        Expr::Call(func, args) => {
            for a in args {
                emit(a, slot, ops)?;
            }
            ops.push(match func {
                Func::Min => Op::Min,
                Func::Max => Op::Max,
                f => Op::Call(*f),
            });
        }
    }
    Ok(())
}
