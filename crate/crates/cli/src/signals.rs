//! Command-line signal syntax.
//!
//! * `const:a[,b,...]` holds a constant vector; a single value is broadcast.
//! * `pwc:t0,v..;t1,v..` switches to the listed values at each time; the
//!   first value also applies before `t0`.
//! * `expr:e1;e2` evaluates expressions in `t`.
//! * `rand:pwc,amplitude=A,dwell=T[,mode=bang]` draws a random
//!   piecewise-constant signal inside the channel box clipped to `[−A, A]`.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use sdlyap_core::{Expr, Interval, Signal};

#[derive(Debug, thiserror::Error)]
pub enum SignalError {
    #[error("signal `{text}`: {message}")]
    Syntax { text: String, message: String },
    #[error("signal `{text}`: {source}")]
    Core { text: String, source: sdlyap_core::Error },
}

/// Default dwell time of random signals.
pub const DEFAULT_DWELL: f64 = 0.3;

/// Which channel a signal drives; the schedule perturbation `d̃` is
/// nonnegative.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Channel {
    Bounded,
    Schedule,
}

struct RandomSpec {
    amplitude: f64,
    dwell: f64,
    bang: bool,
}

fn syntax(text: &str, message: impl Into<String>) -> SignalError {
    SignalError::Syntax { text: text.to_string(), message: message.into() }
}

fn numbers(text: &str, part: &str) -> Result<Vec<f64>, SignalError> {
    part.split(',')
        .map(|v| v.trim().parse::<f64>().map_err(|_| syntax(text, format!("`{}` is not a number", v.trim()))))
        .collect()
}

fn broadcast(text: &str, values: Vec<f64>, dim: usize) -> Result<Vec<f64>, SignalError> {
    match values.len() {
        len if len == dim => Ok(values),
        1 => Ok(vec![values[0]; dim]),
        len => Err(syntax(text, format!("expected {dim} values, found {len}"))),
    }
}

fn parse_random(text: &str, body: &str) -> Result<RandomSpec, SignalError> {
    let mut parts = body.split(',').map(str::trim);
    if parts.next() != Some("pwc") {
        return Err(syntax(text, "only `rand:pwc,...` is supported"));
    }
    let mut spec = RandomSpec { amplitude: 1.0, dwell: DEFAULT_DWELL, bang: false };
    for part in parts {
        let (key, value) = part.split_once('=').ok_or_else(|| syntax(text, format!("expected key=value, found `{part}`")))?;
        match key.trim() {
            "amplitude" => spec.amplitude = value.trim().parse().map_err(|_| syntax(text, "amplitude must be a number"))?,
            "dwell" => spec.dwell = value.trim().parse().map_err(|_| syntax(text, "dwell must be a number"))?,
            "mode" => match value.trim() {
                "bang" => spec.bang = true,
                "uniform" => spec.bang = false,
                other => return Err(syntax(text, format!("unknown mode `{other}`"))),
            },
            other => return Err(syntax(text, format!("unknown key `{other}`"))),
        }
    }
    if !(spec.amplitude >= 0.0 && spec.amplitude.is_finite()) {
        return Err(syntax(text, "amplitude must be finite and nonnegative"));
    }
    if !(spec.dwell > 0.0 && spec.dwell.is_finite()) {
        return Err(syntax(text, "dwell must be positive"));
    }
    Ok(spec)
}

/// Sampling range of one component.
fn range(channel: Channel, bound: Option<&Interval>, amplitude: f64) -> (f64, f64) {
    let (lo, hi) = match channel {
        Channel::Schedule => (0.0, amplitude),
        Channel::Bounded => (-amplitude, amplitude),
    };
    match bound {
        Some(b) => {
            let (lo, hi) = (lo.max(b.lo), hi.min(b.hi));
            if lo <= hi {
                (lo, hi)
            } else {
                // the box lies outside [−A, A]; use its nearest point
                let p = if b.lo > 0.0 { b.lo } else { b.hi };
                (p, p)
            }
        }
        None => (lo, hi),
    }
}

/// Parses a signal of dimension `dim`.
///
/// `bounds` is the channel box (empty for `d̃`); random signals are drawn
/// from `rng` on `[0, t_final]`.
pub fn parse_signal(text: &str, dim: usize, channel: Channel, bounds: &[Interval], t_final: f64, rng: &mut ChaCha8Rng) -> Result<Signal, SignalError> {
    let core = |source| SignalError::Core { text: text.to_string(), source };
    let (kind, body) = text.split_once(':').ok_or_else(|| syntax(text, "expected `const:`, `pwc:`, `expr:` or `rand:`"))?;
    let signal = match kind.trim() {
        "const" => {
            if dim == 0 {
                return Ok(Signal::zero(0));
            }
            Signal::constant(broadcast(text, numbers(text, body)?, dim)?)
        }
        "pwc" => {
            let mut times = Vec::new();
            let mut values = Vec::new();
            for piece in body.split(';').filter(|p| !p.trim().is_empty()) {
                let mut row = numbers(text, piece)?;
                if row.len() < 2 {
                    return Err(syntax(text, format!("piece `{piece}` needs a time and a value")));
                }
                let t = row.remove(0);
                times.push(t);
                values.push(broadcast(text, row, dim)?);
            }
            if times.is_empty() {
                return Err(syntax(text, "no pieces"));
            }
            Signal::piecewise(times, values).map_err(core)?
        }
        "expr" => {
            let parts: Vec<Expr> = body
                .split(';')
                .map(|p| Expr::parse(p.trim()).map_err(|e| syntax(text, format!("{e} in `{}`", p.trim()))))
                .collect::<Result<_, _>>()?;
            let parts = match parts.len() {
                len if len == dim => parts,
                1 => vec![parts[0].clone(); dim],
                len => return Err(syntax(text, format!("expected {dim} expressions, found {len}"))),
            };
            Signal::expression(parts).map_err(core)?
        }
        "rand" => {
            let spec = parse_random(text, body)?;
            let ranges: Vec<(f64, f64)> = (0..dim).map(|j| range(channel, bounds.get(j), spec.amplitude)).collect();
            Signal::random_piecewise(t_final, spec.dwell, rng, |r| {
                ranges
                    .iter()
                    .map(|&(lo, hi)| match (lo == hi, spec.bang) {
                        (true, _) => lo,
                        (false, true) => {
                            if r.gen_bool(0.5) {
                                hi
                            } else {
                                lo
                            }
                        }
                        (false, false) => r.gen_range(lo..=hi),
                    })
                    .collect()
            })
            .map_err(core)?
        }
        other => return Err(syntax(text, format!("unknown signal kind `{other}`"))),
    };
    if signal.dim() != dim {
        return Err(syntax(text, format!("expected dimension {dim}, found {}", signal.dim())));
    }
    Ok(signal)
}
