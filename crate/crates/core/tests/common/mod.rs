#![allow(dead_code)]

/// Expressions in `x[1]`, `x[2]` that are smooth on `[0.3, 2]²`.
pub const CORPUS: [&str; 30] = [
    "x[1]",
    "x[1] + x[2]",
    "x[1] - x[2]*3",
    "-x[1]^2",
    "(-x[1])^2 + x[2]",
    "x[1]*x[2]",
    "x[1]/x[2]",
    "x[1]^3 - 2*x[1]*x[2]^2",
    "x[2]^(-1)",
    "x[1]^2.5",
    "sqrt(x[1]^2 + x[2]^2)",
    "exp(-x[1])*cos(x[2])",
    "sin(x[1]*x[2])",
    "log(1 + x[1]^2)",
    "tanh(x[1] - x[2])",
    "x[1]^4 - x[2]",
    "x[1]*exp(x[2]/3)",
    "(x[1] + x[2])^2/2",
    "-2*x[1] - 0.5*x[1]^3 + x[2]",
    "x[2]^2 - x[2]^3 - 2*x[2]",
    "1/(1 + x[1]^2 + x[2]^2)",
    "exp(sin(x[1]))",
    "log(x[1])*x[2]",
    "sqrt(x[1])*sqrt(x[2])",
    "x[1] - (x[2] - 3)",
    "x[1]/(x[2]*2)",
    "2^3*x[1]",
    "cos(x[1])^2 + sin(x[2])^2",
    "x[1]^2*x[2]^2/(x[1] + x[2])",
    "- -x[1] + 1e-3*x[2]^4",
];
