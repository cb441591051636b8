//! System models: the sampled-data vector field with its output map,
//! sampling function and input sets, the open-loop plant used for
//! emulation, and state-space regions for grid sampling.

use serde::{Deserialize, Serialize};

use crate::comparison::PropertyCheck;
use crate::expr::{Compiled, Expr, Role, Var};
use crate::{Error, Result};

/// Closed interval `[lo, hi]`; bounds may be infinite.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Interval {
        Interval { lo, hi }
    }

    pub fn symmetric(half_width: f64) -> Interval {
        Interval { lo: -half_width, hi: half_width }
    }

    pub fn point(value: f64) -> Interval {
        Interval { lo: value, hi: value }
    }

    pub fn unbounded() -> Interval {
        Interval { lo: f64::NEG_INFINITY, hi: f64::INFINITY }
    }

    pub fn is_valid(&self) -> bool {
        !self.lo.is_nan() && !self.hi.is_nan() && self.lo <= self.hi
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, value: f64, tol: f64) -> bool {
        value >= self.lo - tol && value <= self.hi + tol
    }

    pub fn is_within(&self, outer: &Interval) -> bool {
        self.lo >= outer.lo && self.hi <= outer.hi
    }

    /// Evenly spaced points including both ends (the midpoint when `k == 1`).
    pub fn linspace(&self, k: usize) -> Vec<f64> {
        match k {
            0 => Vec::new(),
            1 => vec![0.5 * (self.lo + self.hi)],
            _ => (0..k).map(|i| self.lo + self.width() * i as f64 / (k - 1) as f64).collect(),
        }
    }
}

/// Flat input layout of a compiled vector field:
/// `[x(n), xs(n), d(l), v(m), vs(m)]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FieldLayout {
    pub n: usize,
    pub l: usize,
    pub m: usize,
}

impl FieldLayout {
    pub fn len(&self) -> usize {
        2 * self.n + self.l + 2 * self.m
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn x(&self) -> usize {
        0
    }
    pub fn xs(&self) -> usize {
        self.n
    }
    pub fn d(&self) -> usize {
        2 * self.n
    }
    pub fn v(&self) -> usize {
        2 * self.n + self.l
    }
    pub fn vs(&self) -> usize {
        2 * self.n + self.l + self.m
    }

    pub fn slot(&self, var: &Var) -> Option<usize> {
        let i = var.index()?;
        let (offset, len) = match var.role() {
            Role::X => (self.x(), self.n),
            Role::Xs | Role::X0 => (self.xs(), self.n),
            Role::D => (self.d(), self.l),
            Role::V => (self.v(), self.m),
            Role::Vs | Role::V0 => (self.vs(), self.m),
            _ => return None,
        };
        (i >= 1 && i <= len).then(|| offset + i - 1)
    }

    /// Packs the five argument groups into `buf`.
    #[inline]
    pub fn pack(&self, buf: &mut [f64], x: &[f64], xs: &[f64], d: &[f64], v: &[f64], vs: &[f64]) {
        buf[self.x()..self.x() + self.n].copy_from_slice(x);
        buf[self.xs()..self.xs() + self.n].copy_from_slice(xs);
        buf[self.d()..self.d() + self.l].copy_from_slice(d);
        buf[self.v()..self.v() + self.m].copy_from_slice(v);
        buf[self.vs()..self.vs() + self.m].copy_from_slice(vs);
    }
}

/// Compiles an expression over `x[1..n]` only.
pub fn compile_state_fn(expr: &Expr, n: usize) -> Result<Compiled> {
    let slot = |v: &Var| match (v.role(), v.index()) {
        (Role::X, Some(i)) if i >= 1 && i <= n => Some(i - 1),
        _ => None,
    };
    Compiled::new(expr, &slot).map_err(|e| Error::Model(format!("`{expr}`: {e}")))
}

/// The sampled-data system `ẋ = f(x, xs, d, v, vs)` with output `H`,
/// sampling function `h ≤ r`, disturbance box `D` and input box `U`.
#[derive(Clone, Debug)]
pub struct SystemModel {
    n: usize,
    f: Vec<Expr>,
    output: Vec<Expr>,
    h: Expr,
    r: f64,
    d_box: Vec<Interval>,
    u_box: Vec<Interval>,
    layout: FieldLayout,
    f_compiled: Vec<Compiled>,
    output_compiled: Vec<Compiled>,
    h_compiled: Compiled,
}

impl SystemModel {
    pub fn new(n: usize, f: Vec<Expr>, output: Vec<Expr>, h: Expr, r: f64, d_box: Vec<Interval>, u_box: Vec<Interval>) -> Result<SystemModel> {
        if n == 0 {
            return Err(Error::Model("state dimension must be positive".into()));
        }
        if f.len() != n {
            return Err(Error::Model(format!("f has {} components, expected {n}", f.len())));
        }
        if output.is_empty() {
            return Err(Error::Model("output map H must have at least one component".into()));
        }
        if !(r > 0.0 && r.is_finite()) {
            return Err(Error::Model(format!("sampling bound r must be positive and finite, got {r}")));
        }
        for (name, b) in [("D", &d_box), ("U", &u_box)] {
            if let Some(k) = b.iter().position(|i| !i.is_valid()) {
                return Err(Error::Model(format!("{name}[{}] is not a valid interval", k + 1)));
            }
        }
        let layout = FieldLayout { n, l: d_box.len(), m: u_box.len() };
        let f_compiled = f
            .iter()
            .enumerate()
            .map(|(i, e)| Compiled::new(e, &|v| layout.slot(v)).map_err(|err| Error::Model(format!("f[{}]: {err}", i + 1))))
            .collect::<Result<Vec<_>>>()?;
        let output_compiled = output.iter().map(|e| compile_state_fn(e, n)).collect::<Result<Vec<_>>>()?;
        let h_compiled = compile_state_fn(&h, n)?;
        Ok(SystemModel { n, f, output, h, r, d_box, u_box, layout, f_compiled, output_compiled, h_compiled })
    }

    /// Parses every expression from text.
    pub fn parse(n: usize, f: &[&str], output: &[&str], h: &str, r: f64, d_box: Vec<Interval>, u_box: Vec<Interval>) -> Result<SystemModel> {
        let parse_all = |v: &[&str]| v.iter().map(|t| Expr::parse(t).map_err(Error::from)).collect::<Result<Vec<_>>>();
        SystemModel::new(n, parse_all(f)?, parse_all(output)?, Expr::parse(h)?, r, d_box, u_box)
    }

    pub fn n(&self) -> usize {
        self.n
    }
    pub fn p(&self) -> usize {
        self.output.len()
    }
    pub fn l(&self) -> usize {
        self.d_box.len()
    }
    pub fn m(&self) -> usize {
        self.u_box.len()
    }
    pub fn f(&self) -> &[Expr] {
        &self.f
    }
    pub fn output(&self) -> &[Expr] {
        &self.output
    }
    pub fn h(&self) -> &Expr {
        &self.h
    }
    pub fn r(&self) -> f64 {
        self.r
    }
    pub fn d_box(&self) -> &[Interval] {
        &self.d_box
    }
    pub fn u_box(&self) -> &[Interval] {
        &self.u_box
    }
    pub fn layout(&self) -> FieldLayout {
        self.layout
    }

    /// True when `H(x) = x` componentwise.
    pub fn output_is_identity(&self) -> bool {
        self.output.len() == self.n && self.output.iter().enumerate().all(|(i, e)| *e == Expr::var("x", i + 1))
    }

    /// Same model with a different sampling function and bound.
    pub fn with_sampling(&self, h: Expr, r: f64) -> Result<SystemModel> {
        SystemModel::new(self.n, self.f.clone(), self.output.clone(), h, r, self.d_box.clone(), self.u_box.clone())
    }

    /// Same model with constant sampling period `r`.
    pub fn with_constant_sampling(&self, r: f64) -> Result<SystemModel> {
        self.with_sampling(Expr::num(r), r)
    }

    /// Same model with a different disturbance box.
    pub fn with_d_box(&self, d_box: Vec<Interval>) -> Result<SystemModel> {
        SystemModel::new(self.n, self.f.clone(), self.output.clone(), self.h.clone(), self.r, d_box, self.u_box.clone())
    }

    /// Evaluates the vector field on a packed input (see [`FieldLayout`]).
    #[inline]
    pub fn eval_f_packed(&self, packed: &[f64], out: &mut [f64]) -> Result<()> {
        for (o, c) in out.iter_mut().zip(&self.f_compiled) {
            *o = c.eval(packed)?;
        }
        Ok(())
    }

    /// Component `i` (0-based) of the vector field on a packed input.
    #[inline]
    pub fn eval_f_component(&self, i: usize, packed: &[f64]) -> Result<f64> {
        Ok(self.f_compiled[i].eval(packed)?)
    }

    pub fn eval_f(&self, x: &[f64], xs: &[f64], d: &[f64], v: &[f64], vs: &[f64]) -> Result<Vec<f64>> {
        let mut buf = vec![0.0; self.layout.len()];
        self.layout.pack(&mut buf, x, xs, d, v, vs);
        let mut out = vec![0.0; self.n];
        self.eval_f_packed(&buf, &mut out)?;
        Ok(out)
    }

    pub fn eval_output(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.output_compiled.iter().map(|c| c.eval(x).map_err(Error::from)).collect()
    }

    pub fn eval_h(&self, x: &[f64]) -> Result<f64> {
        Ok(self.h_compiled.eval(x)?)
    }

    /// Sampled check of `0 < h(x) ≤ r` over the region grid.
    pub fn validate_h(&self, region: &Region, grid_per_axis: usize) -> Result<PropertyCheck> {
        let mut worst: Option<(f64, Vec<f64>)> = None;
        for x in region.grid_all(grid_per_axis) {
            let h = self.eval_h(&x)?;
            let excess = if h <= 0.0 { -h + f64::MIN_POSITIVE } else { (h - self.r).max(0.0) };
            if excess > 0.0 && worst.as_ref().is_none_or(|(w, _)| excess > *w) {
                worst = Some((excess, x));
            }
        }
        Ok(PropertyCheck {
            property: "0 < h(x) <= r".into(),
            passed: worst.is_none(),
            worst: worst.map(|(_, x)| crate::comparison::Violation { s: crate::verify::norm(&x), value: self.eval_h(&x).unwrap_or(f64::NAN) }),
        })
    }

    /// Largest `|f(0, 0, d, 0, 0)|` over the given disturbance samples.
    pub fn equilibrium_residual(&self, d_samples: &[Vec<f64>]) -> Result<f64> {
        let zero_x = vec![0.0; self.n];
        let zero_v = vec![0.0; self.m()];
        let mut worst: f64 = 0.0;
        for d in d_samples {
            let f = self.eval_f(&zero_x, &zero_x, d, &zero_v, &zero_v)?;
            worst = worst.max(crate::verify::norm(&f));
        }
        Ok(worst)
    }

    /// Corners of the disturbance box (a single empty vector when `l = 0`).
    pub fn d_corners(&self) -> Vec<Vec<f64>> {
        box_corners(&self.d_box)
    }
}

/// All `2^k` corners of a box (one empty corner for an empty box).
pub fn box_corners(b: &[Interval]) -> Vec<Vec<f64>> {
    let mut corners = vec![Vec::with_capacity(b.len())];
    for iv in b {
        let mut next = Vec::with_capacity(corners.len() * 2);
        for c in &corners {
            for end in [iv.lo, iv.hi] {
                let mut c2 = c.clone();
                c2.push(end);
                next.push(c2);
            }
            if iv.lo == iv.hi {
                next.pop();
            }
        }
        corners = next;
    }
    corners
}

/// Open-loop plant `ẋ = f_open(x, u, d)` with feedback `u = k(x)` and
/// optional measurement-error and actuator-error channels.
#[derive(Clone, Debug)]
pub struct PlantModel {
    pub n: usize,
    pub m: usize,
    pub f_open: Vec<Expr>,
    pub output: Vec<Expr>,
    pub k: Vec<Expr>,
    pub d_box: Vec<Interval>,
    /// Bounds of the actuator error `v`, one per input.
    pub v_box: Vec<Interval>,
    /// Bounds of the measurement error `e`, one per state.
    pub e_box: Vec<Interval>,
    pub measurement_error: bool,
    pub actuator_error: bool,
}

impl PlantModel {
    /// Plant with an actuator-error channel bounded by `v_box` and no
    /// measurement error.
    pub fn new(n: usize, f_open: Vec<Expr>, output: Vec<Expr>, k: Vec<Expr>, d_box: Vec<Interval>, v_box: Vec<Interval>) -> Result<PlantModel> {
        let m = k.len();
        let plant = PlantModel {
            n,
            m,
            f_open,
            output,
            k,
            d_box,
            v_box,
            e_box: vec![Interval::point(0.0); n],
            measurement_error: false,
            actuator_error: true,
        };
        plant.validate()?;
        Ok(plant)
    }

    pub fn validate(&self) -> Result<()> {
        if self.f_open.len() != self.n {
            return Err(Error::Model(format!("f_open has {} components, expected {}", self.f_open.len(), self.n)));
        }
        if self.k.len() != self.m {
            return Err(Error::Model(format!("feedback k has {} components but the plant has {} inputs", self.k.len(), self.m)));
        }
        if self.actuator_error && self.v_box.len() != self.m {
            return Err(Error::Model(format!("actuator error box has {} intervals, expected {}", self.v_box.len(), self.m)));
        }
        if self.measurement_error && self.e_box.len() != self.n {
            return Err(Error::Model(format!("measurement error box has {} intervals, expected {}", self.e_box.len(), self.n)));
        }
        for (i, e) in self.f_open.iter().enumerate() {
            for v in e.variables() {
                let ok = match (v.role(), v.index()) {
                    (Role::X, Some(j)) => j >= 1 && j <= self.n,
                    (Role::U, Some(j)) => j >= 1 && j <= self.m,
                    (Role::D, Some(j)) => j >= 1 && j <= self.d_box.len(),
                    _ => false,
                };
                if !ok {
                    return Err(Error::Model(format!("f_open[{}] uses `{v}`, outside x[1..{}], u[1..{}], d[1..{}]", i + 1, self.n, self.m, self.d_box.len())));
                }
            }
        }
        let zero = vec![0.0; self.n];
        for (i, k) in self.k.iter().enumerate() {
            let value = compile_state_fn(k, self.n)?.eval(&zero)?;
            if value.abs() > 1e-12 {
                return Err(Error::Model(format!("k[{}](0) = {value}, feedback must vanish at the origin", i + 1)));
            }
        }
        Ok(())
    }
}

/// Box-shaped region of the state space with an optional excluded ball
/// around the origin.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub bounds: Vec<Interval>,
    pub exclude_origin_radius: f64,
}

impl Region {
    pub fn new(bounds: Vec<Interval>, exclude_origin_radius: f64) -> Result<Region> {
        if bounds.is_empty() || bounds.iter().any(|b| !b.is_valid() || !b.lo.is_finite() || !b.hi.is_finite()) {
            return Err(Error::Input("region box must be nonempty and finite".into()));
        }
        let min_half = bounds.iter().map(|b| 0.5 * b.width()).fold(f64::INFINITY, f64::min);
        if !(exclude_origin_radius >= 0.0) || (exclude_origin_radius > 0.0 && exclude_origin_radius >= min_half) {
            return Err(Error::Input(format!("exclusion radius {exclude_origin_radius} must be below the smallest half-width {min_half}")));
        }
        Ok(Region { bounds, exclude_origin_radius })
    }

    /// The cube `[−half, half]^n`.
    pub fn cube(n: usize, half: f64) -> Region {
        Region { bounds: vec![Interval::symmetric(half); n], exclude_origin_radius: 0.0 }
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    /// Tensor grid with `k` points per axis, including points inside
    /// the excluded ball.
    pub fn grid_all(&self, k: usize) -> Vec<Vec<f64>> {
        let axes: Vec<Vec<f64>> = self.bounds.iter().map(|b| b.linspace(k)).collect();
        let mut points = vec![Vec::with_capacity(self.dim())];
        for axis in &axes {
            let mut next = Vec::with_capacity(points.len() * axis.len());
            for p in &points {
                for &a in axis {
                    let mut q = p.clone();
                    q.push(a);
                    next.push(q);
                }
            }
            points = next;
        }
        points
    }

    /// Tensor grid with the excluded ball removed.
    pub fn grid(&self, k: usize) -> Vec<Vec<f64>> {
        let radius = self.exclude_origin_radius;
        self.grid_all(k).into_iter().filter(|x| radius == 0.0 || crate::verify::norm(x) >= radius).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_model_builds_and_evaluates() {
        let m = SystemModel::parse(1, &["-xs[1]"], &["x[1]"], "0.5", 0.5, vec![], vec![Interval::point(0.0)]).unwrap();
        assert_eq!(m.eval_f(&[2.0], &[1.0], &[], &[0.0], &[0.0]).unwrap(), vec![-1.0]);
        assert!(m.output_is_identity());
        assert_eq!(m.eval_h(&[3.0]).unwrap(), 0.5);
    }

    #[test]
    fn rejects_out_of_range_variables() {
        let err = SystemModel::parse(1, &["x[2]"], &["x[1]"], "0.5", 0.5, vec![], vec![]).unwrap_err();
        assert!(err.to_string().contains("x[2]"), "{err}");
        assert!(SystemModel::parse(2, &["x[1]"], &["x[1]"], "0.5", 0.5, vec![], vec![]).is_err());
        assert!(SystemModel::parse(1, &["x[1]"], &["x[1]"], "0.5", 0.0, vec![], vec![]).is_err());
    }

    #[test]
    fn sampling_positivity_is_checked() {
        let region = Region::cube(1, 2.0);
        let ok = SystemModel::parse(1, &["-x[1]"], &["x[1]"], "0.1/(1+x[1]^2)", 0.1, vec![], vec![]).unwrap();
        assert!(ok.validate_h(&region, 21).unwrap().passed);
        let bad = SystemModel::parse(1, &["-x[1]"], &["x[1]"], "x[1]", 1.0, vec![], vec![]).unwrap();
        assert!(!bad.validate_h(&region, 21).unwrap().passed);
    }

    #[test]
    fn region_grid_and_exclusion() {
        let region = Region::new(vec![Interval::symmetric(1.0); 2], 0.1).unwrap();
        assert_eq!(region.grid_all(3).len(), 9);
        assert_eq!(region.grid(3).len(), 8);
        assert!(Region::new(vec![Interval::symmetric(1.0)], 1.0).is_err());
        assert!(Region::new(vec![], 0.0).is_err());
    }

    #[test]
    fn corners_of_box_with_degenerate_axis() {
        let c = box_corners(&[Interval::new(0.0, 1.0), Interval::point(2.0)]);
        assert_eq!(c, vec![vec![0.0, 2.0], vec![1.0, 2.0]]);
        assert_eq!(box_corners(&[]), vec![Vec::<f64>::new()]);
    }

    #[test]
    fn plant_feedback_must_vanish() {
        let parse = |t: &str| Expr::parse(t).unwrap();
        assert!(PlantModel::new(1, vec![parse("u[1]")], vec![parse("x[1]")], vec![parse("1-x[1]")], vec![], vec![Interval::point(0.0)]).is_err());
        assert!(PlantModel::new(1, vec![parse("u[1]")], vec![parse("x[1]")], vec![parse("-2*x[1]")], vec![], vec![Interval::point(0.0)]).is_ok());
    }
}
