//! Lower and upper bounding flows in the `(u, v)` plane.
//!
//! ```text
//! F1     = -p u + beta v
//! F2_L/U = 2p(p-1) - 2(p-1) v + 2p u (p u - beta v) -/+ 2 beta Lambda_p v
//! F2     = 2p(p-1) + 2p^2 u^2 - 2(p-1) v - 2p beta u v - 2 beta w
//! ```
//!
//! `Phi_L = (F1, F2_L)` and `Phi_U = (F1, F2_U)`.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::sphere_dynamics::{fmt17, TrajectoryRecord};
use crate::{Error, Result};

pub const DEFAULT_FLOW_STEP: f64 = 1e-3;
pub const CONVERGENCE_TOL: f64 = 1e-10;
pub const BLOWUP_RADIUS: f64 = 1e6;

/// Ground-state energy densities `E_{0,p}` keyed by `p`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct E0Table(pub BTreeMap<u32, f64>);

impl Default for E0Table {
    fn default() -> Self {
        Self::builtin()
    }
}

impl E0Table {
    /// `E_{0,1} = 1`, `E_{0,2} = sqrt(2)`.
    pub fn builtin() -> Self {
        Self(BTreeMap::from([(1, 1.0), (2, std::f64::consts::SQRT_2)]))
    }

    pub fn with(mut self, p: u32, e0: f64) -> Self {
        self.0.insert(p, e0);
        self
    }

    pub fn get(&self, p: u32) -> Option<f64> {
        self.0.get(&p).copied()
    }
}

/// `sqrt(p(p-1)) (sqrt(2) + E_{0,p-2})`
pub fn lambda_p_default(p: u32, table: &E0Table) -> Result<f64> {
    if p < 3 {
        return Err(Error::MissingE0 { p, index: 0 });
    }
    let e0 = table.get(p - 2).ok_or(Error::MissingE0 { p, index: p - 2 })?;
    let pf = p as f64;
    Ok((pf * (pf - 1.0)).sqrt() * (std::f64::consts::SQRT_2 + e0))
}

/// Threshold energy `E_{inf,p} = 2 sqrt((p-1)/p)`.
pub fn e_inf(p: u32) -> f64 {
    let pf = p as f64;
    2.0 * ((pf - 1.0) / pf).sqrt()
}

/// `u_c = beta / (1 + beta Lambda / (p-1))`, defined for `beta >= 0`.
pub fn u_c_formula(p: u32, beta: f64, lambda: f64) -> f64 {
    beta / (1.0 + beta * lambda / (p as f64 - 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FlowKind {
    Lower,
    Upper,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanePoint {
    pub u: f64,
    pub v: f64,
}

impl PlanePoint {
    pub fn new(u: f64, v: f64) -> Self {
        Self { u, v }
    }

    pub fn dist_inf(&self, o: &PlanePoint) -> f64 {
        (self.u - o.u).abs().max((self.v - o.v).abs())
    }

    pub fn norm(&self) -> f64 {
        self.u.hypot(self.v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowParams {
    pub p: u32,
    pub beta: f64,
    pub lambda_p: f64,
    pub e0_table: E0Table,
}

impl FlowParams {
    pub fn new(p: u32, beta: f64, lambda_p: f64) -> Result<Self> {
        if p < 2 {
            return Err(Error::InvalidArgument(format!("p must be >= 2, got {p}")));
        }
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::InvalidArgument(format!("beta must be > 0, got {beta}")));
        }
        if !(lambda_p > 0.0 && lambda_p.is_finite()) {
            return Err(Error::InvalidArgument(format!("Lambda_p must be > 0, got {lambda_p}")));
        }
        Ok(Self { p, beta, lambda_p, e0_table: E0Table::builtin() })
    }

    /// Uses [`lambda_p_default`] and checks it against the single-point
    /// operator-norm scale `2 sqrt(p(p-1))`.
    pub fn from_table(p: u32, beta: f64, table: E0Table) -> Result<Self> {
        let lambda = lambda_p_default(p, &table)?;
        let pf = p as f64;
        let edge = 2.0 * (pf * (pf - 1.0)).sqrt();
        if lambda < edge {
            return Err(Error::InvalidArgument(format!(
                "Lambda_p = {lambda} is below the single-point edge {edge}"
            )));
        }
        let mut out = Self::new(p, beta, lambda)?;
        out.e0_table = table;
        Ok(out)
    }

    fn pf(&self) -> f64 {
        self.p as f64
    }

    pub fn f1(&self, u: f64, v: f64) -> f64 {
        -self.pf() * u + self.beta * v
    }

    pub fn f2_full(&self, u: f64, v: f64, w: f64) -> f64 {
        let p = self.pf();
        2.0 * p * (p - 1.0) + 2.0 * p * p * u * u - 2.0 * (p - 1.0) * v - 2.0 * p * self.beta * u * v
            - 2.0 * self.beta * w
    }

    pub fn f2_lower(&self, u: f64, v: f64) -> f64 {
        let p = self.pf();
        2.0 * p * (p - 1.0) - 2.0 * (p - 1.0) * v + 2.0 * p * u * (p * u - self.beta * v)
            - 2.0 * self.beta * self.lambda_p * v
    }

    pub fn f2_upper(&self, u: f64, v: f64) -> f64 {
        let p = self.pf();
        2.0 * p * (p - 1.0) - 2.0 * (p - 1.0) * v + 2.0 * p * u * (p * u - self.beta * v)
            + 2.0 * self.beta * self.lambda_p * v
    }

    pub fn f2(&self, kind: FlowKind, u: f64, v: f64) -> f64 {
        match kind {
            FlowKind::Lower => self.f2_lower(u, v),
            FlowKind::Upper => self.f2_upper(u, v),
        }
    }

    /// `Phi_L` or `Phi_U` at `z`.
    pub fn phi(&self, kind: FlowKind, z: PlanePoint) -> (f64, f64) {
        (self.f1(z.u, z.v), self.f2(kind, z.u, z.v))
    }

    pub fn u_c(&self) -> f64 {
        u_c_formula(self.p, self.beta, self.lambda_p)
    }

    /// `beta / (1 - beta Lambda / (p-1))` when `beta Lambda < p-1`, else `+inf`.
    pub fn bar_u_c(&self) -> f64 {
        let r = self.beta * self.lambda_p / (self.pf() - 1.0);
        if r < 1.0 {
            self.beta / (1.0 - r)
        } else {
            f64::INFINITY
        }
    }

    pub fn has_upper_fixed_point(&self) -> bool {
        self.bar_u_c().is_finite()
    }

    /// `p(p-1) / (p-1 + beta Lambda) = p u_c / beta`
    pub fn v_c(&self) -> f64 {
        let p = self.pf();
        p * (p - 1.0) / (p - 1.0 + self.beta * self.lambda_p)
    }

    pub fn z_c(&self) -> PlanePoint {
        PlanePoint::new(self.u_c(), self.v_c())
    }

    pub fn bar_z_c(&self) -> Option<PlanePoint> {
        let u = self.bar_u_c();
        if u.is_finite() {
            let p = self.pf();
            Some(PlanePoint::new(u, p * (p - 1.0) / (p - 1.0 - self.beta * self.lambda_p)))
        } else {
            None
        }
    }

    pub fn ell_1(&self, u: f64) -> f64 {
        self.pf() * u / self.beta
    }

    fn f_curve(&self, u: f64, sign: f64, curve: &'static str) -> Result<f64> {
        let p = self.pf();
        let den = p - 1.0 + p * self.beta * u + sign * self.beta * self.lambda_p;
        let val = (p * (p - 1.0) + p * p * u * u) / den;
        if den <= 0.0 || !(val >= 0.0) || !val.is_finite() {
            return Err(Error::Domain { curve, u });
        }
        Ok(val)
    }

    /// Zero set of `F2_L`: `(p(p-1) + p^2 u^2) / (p-1 + p beta u + beta Lambda)`.
    pub fn f_l(&self, u: f64) -> Result<f64> {
        self.f_curve(u, 1.0, "f_L")
    }

    /// Zero set of `F2_U`: `(p(p-1) + p^2 u^2) / (p-1 + p beta u - beta Lambda)`.
    pub fn f_u(&self, u: f64) -> Result<f64> {
        self.f_curve(u, -1.0, "f_U")
    }

    /// Left edge of the `f_U` domain.
    pub fn f_u_domain_start(&self) -> f64 {
        (self.beta * self.lambda_p - (self.pf() - 1.0)) / (self.pf() * self.beta)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Terminal {
    Converged,
    DomainExit,
    Horizon,
    /// A caller-supplied stop predicate fired.
    Stopped,
}

/// A sampled planar path.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
pub struct PlaneTrajectory {
    pub times: Vec<f64>,
    pub points: Vec<PlanePoint>,
    pub terminal: Terminal,
}

impl std::fmt::Debug for PlaneTrajectory {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PlaneTrajectory")
            .field("samples", &self.points.len())
            .field("first", &self.points.first())
            .field("last", &self.points.last())
            .field("end_time", &self.times.last())
            .field("terminal", &self.terminal)
            .finish()
    }
}

impl PlaneTrajectory {
    pub fn new(times: Vec<f64>, points: Vec<PlanePoint>, terminal: Terminal) -> Result<Self> {
        if times.len() != points.len() || times.is_empty() {
            return Err(Error::InvalidArgument("times and points must be non-empty and equal length".into()));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Invariant("times must be strictly increasing".into()));
        }
        if points.iter().any(|z| !z.u.is_finite() || !z.v.is_finite()) {
            return Err(Error::Invariant("points must be finite".into()));
        }
        Ok(Self { times, points, terminal })
    }

    /// `(u, v)` path of a Langevin record.
    pub fn from_record(rec: &TrajectoryRecord) -> Result<Self> {
        let pts = rec.u.iter().zip(&rec.v).map(|(&u, &v)| PlanePoint::new(u, v)).collect();
        Self::new(rec.times.clone(), pts, Terminal::Horizon)
    }

    /// A single stationary point.
    pub fn constant(z: PlanePoint, times: Vec<f64>) -> Result<Self> {
        let pts = vec![z; times.len()];
        Self::new(times, pts, Terminal::Horizon)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn first(&self) -> PlanePoint {
        self.points[0]
    }

    pub fn last(&self) -> PlanePoint {
        *self.points.last().expect("non-empty")
    }

    pub fn end_time(&self) -> f64 {
        *self.times.last().expect("non-empty")
    }

    /// Linear interpolation at time `t` inside the sampled range.
    pub fn at(&self, t: f64) -> Option<PlanePoint> {
        if t < self.times[0] || t > self.end_time() {
            return None;
        }
        let i = self.times.partition_point(|&s| s <= t);
        if i == 0 {
            return Some(self.points[0]);
        }
        if i >= self.len() {
            return Some(self.last());
        }
        let (t0, t1) = (self.times[i - 1], self.times[i]);
        let a = (t - t0) / (t1 - t0);
        let (z0, z1) = (self.points[i - 1], self.points[i]);
        Some(PlanePoint::new(z0.u + a * (z1.u - z0.u), z0.v + a * (z1.v - z0.v)))
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("t,u,v\n");
        for (t, z) in self.times.iter().zip(&self.points) {
            let _ = writeln!(s, "{},{},{}", fmt17(*t), fmt17(z.u), fmt17(z.v));
        }
        s
    }
}

/// First sampled time at which `pred` holds, refined by bisection on the
/// chord between the bracketing samples.
pub fn hitting_time(traj: &PlaneTrajectory, pred: impl Fn(PlanePoint) -> bool) -> Option<f64> {
    let i = traj.points.iter().position(|&z| pred(z))?;
    if i == 0 {
        return Some(traj.times[0]);
    }
    let (z0, z1) = (traj.points[i - 1], traj.points[i]);
    let (t0, t1) = (traj.times[i - 1], traj.times[i]);
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..40 {
        let mid = 0.5 * (lo + hi);
        let z = PlanePoint::new(z0.u + mid * (z1.u - z0.u), z0.v + mid * (z1.v - z0.v));
        if pred(z) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Some(t0 + hi * (t1 - t0))
}

pub(crate) struct Rk4Options<'a> {
    pub step: f64,
    pub horizon: f64,
    pub converge_tol: Option<f64>,
    pub stop: Option<&'a dyn Fn(PlanePoint) -> bool>,
}

/// Classical fixed-step RK4 for a (possibly time-dependent) planar field.
pub(crate) fn rk4_integrate(
    field: &mut dyn FnMut(f64, PlanePoint) -> Result<(f64, f64)>,
    init: PlanePoint,
    opts: &Rk4Options,
) -> Result<PlaneTrajectory> {
    if !(opts.step > 0.0) || !(opts.horizon > 0.0) {
        return Err(Error::InvalidArgument("step and horizon must be positive".into()));
    }
    if !(init.v >= 0.0) || !init.u.is_finite() {
        return Err(Error::InvalidArgument(format!("initial point ({}, {}) needs v >= 0", init.u, init.v)));
    }
    let h = opts.step;
    let n = (opts.horizon / h).round() as usize;
    let mut times = vec![0.0];
    let mut points = vec![init];
    let mut z = init;
    let mut terminal = Terminal::Horizon;
    for k in 0..n {
        let t = k as f64 * h;
        let k1 = field(t, z)?;
        if let Some(tol) = opts.converge_tol {
            if k1.0.hypot(k1.1) < tol {
                terminal = Terminal::Converged;
                break;
            }
        }
        let at = |a: f64, d: (f64, f64)| PlanePoint::new(z.u + a * d.0, z.v + a * d.1);
        let k2 = field(t + 0.5 * h, at(0.5 * h, k1))?;
        let k3 = field(t + 0.5 * h, at(0.5 * h, k2))?;
        let k4 = field(t + h, at(h, k3))?;
        let next = PlanePoint::new(
            z.u + h / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0),
            z.v + h / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1),
        );
        let tn = (k + 1) as f64 * h;
        if !(next.norm() <= BLOWUP_RADIUS) {
            let partial = PlaneTrajectory { times, points, terminal: Terminal::Horizon };
            return Err(Error::FlowBlowUp { time: tn, partial: Box::new(partial) });
        }
        if next.v < 0.0 {
            terminal = Terminal::DomainExit;
            break;
        }
        times.push(tn);
        points.push(next);
        z = next;
        if let Some(stop) = opts.stop {
            if stop(next) {
                terminal = Terminal::Stopped;
                break;
            }
        }
    }
    Ok(PlaneTrajectory { times, points, terminal })
}

/// RK4 solution of `(F1, F2_L)` or `(F1, F2_U)`.
pub fn integrate_flow(
    params: &FlowParams,
    kind: FlowKind,
    init: PlanePoint,
    step: f64,
    horizon: f64,
) -> Result<PlaneTrajectory> {
    integrate_flow_until(params, kind, init, step, horizon, None)
}

/// As [`integrate_flow`], additionally stopping once `stop` holds.
pub fn integrate_flow_until(
    params: &FlowParams,
    kind: FlowKind,
    init: PlanePoint,
    step: f64,
    horizon: f64,
    stop: Option<&dyn Fn(PlanePoint) -> bool>,
) -> Result<PlaneTrajectory> {
    let mut field = |_t: f64, z: PlanePoint| Ok(params.phi(kind, z));
    let opts = Rk4Options { step, horizon, converge_tol: Some(CONVERGENCE_TOL), stop };
    rk4_integrate(&mut field, init, &opts)
}

/// A path segment written as `v = gamma(u)` over `[lo, hi]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphTable {
    /// Strictly increasing.
    pub us: Vec<f64>,
    pub vs: Vec<f64>,
    /// `+1` if the path moved right, `-1` if it moved left.
    pub direction: i8,
    /// The path left its `F1`-sign stretch (true) or ended first (false).
    pub crossed: bool,
}

impl GraphTable {
    pub fn from_points(mut pts: Vec<PlanePoint>, direction: i8, crossed: bool) -> Result<Self> {
        if direction < 0 {
            pts.reverse();
        }
        let mut us: Vec<f64> = Vec::with_capacity(pts.len());
        let mut vs: Vec<f64> = Vec::with_capacity(pts.len());
        for z in pts {
            if us.last().is_none_or(|&l| z.u > l) {
                us.push(z.u);
                vs.push(z.v);
            }
        }
        if us.len() < 2 {
            return Err(Error::NotAGraph("fewer than two distinct u samples".into()));
        }
        Ok(Self { us, vs, direction, crossed })
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.us[0], *self.us.last().expect("non-empty"))
    }

    pub fn contains(&self, u: f64) -> bool {
        let (lo, hi) = self.domain();
        u >= lo && u <= hi
    }

    /// Linear interpolation; `None` outside the domain.
    pub fn eval(&self, u: f64) -> Option<f64> {
        if !self.contains(u) {
            return None;
        }
        let i = self.us.partition_point(|&s| s < u);
        if i == 0 {
            return Some(self.vs[0]);
        }
        if i >= self.us.len() {
            return Some(*self.vs.last().expect("non-empty"));
        }
        let (u0, u1) = (self.us[i - 1], self.us[i]);
        let a = (u - u0) / (u1 - u0);
        Some(self.vs[i - 1] + a * (self.vs[i] - self.vs[i - 1]))
    }

    /// Resamples on a uniform grid of spacing `du` (domain endpoints kept).
    pub fn resample(&self, du: f64) -> Self {
        let (lo, hi) = self.domain();
        let k = ((hi - lo) / du).floor() as usize;
        let mut us: Vec<f64> = (0..=k).map(|i| lo + i as f64 * du).collect();
        if hi - us.last().copied().unwrap_or(lo) > 1e-12 {
            us.push(hi);
        }
        let vs = us.iter().map(|&u| self.eval(u).expect("inside domain")).collect();
        Self { us, vs, direction: self.direction, crossed: self.crossed }
    }

    /// Appends an endpoint beyond the current domain in the path direction.
    pub fn extend_to(&mut self, z: PlanePoint) {
        let (lo, hi) = self.domain();
        if z.u > hi {
            self.us.push(z.u);
            self.vs.push(z.v);
        } else if z.u < lo {
            self.us.insert(0, z.u);
            self.vs.insert(0, z.v);
        }
    }
}

/// Sign with a rounding band: `F1` values below `tol` count as zero.
fn sign(x: f64, tol: f64) -> i8 {
    if x > tol {
        1
    } else if x < -tol {
        -1
    } else {
        0
    }
}

/// Reparameterises a flow path by `u` up to the first change of sign of
/// `F1`, with linear refinement of the crossing.
pub fn graph_of_flow(traj: &PlaneTrajectory, params: &FlowParams) -> Result<GraphTable> {
    let f1: Vec<f64> = traj.points.iter().map(|z| params.f1(z.u, z.v)).collect();
    let p = f64::from(params.p);
    let tol: Vec<f64> = traj
        .points
        .iter()
        .map(|z| 1e-12 * (p * z.u.abs() + params.beta * z.v.abs() + 1.0))
        .collect();
    let s = f1
        .iter()
        .zip(&tol)
        .map(|(&f, &t)| sign(f, t))
        .find(|&s| s != 0)
        .ok_or_else(|| Error::NotAGraph("F1 vanishes along the whole path".into()))?;
    let mut pts = vec![traj.points[0]];
    let mut crossed = false;
    for i in 1..traj.len() {
        let si = sign(f1[i], tol[i]);
        if si == -s {
            let (a, b) = (f1[i - 1], f1[i]);
            let lam = a / (a - b);
            let (z0, z1) = (traj.points[i - 1], traj.points[i]);
            pts.push(PlanePoint::new(z0.u + lam * (z1.u - z0.u), z0.v + lam * (z1.v - z0.v)));
            crossed = true;
            break;
        }
        pts.push(traj.points[i]);
        if si == 0 && i > 1 {
            crossed = true;
            break;
        }
    }
    GraphTable::from_points(pts, s, crossed)
}

/// `u,f_L,f_U,ell1` on a grid; out-of-domain entries are left empty.
pub fn curve_table_csv(params: &FlowParams, us: &[f64]) -> String {
    let mut s = String::from("u,f_L,f_U,ell1\n");
    let opt = |r: Result<f64>| r.map(fmt17).unwrap_or_default();
    for &u in us {
        let _ = writeln!(s, "{},{},{},{}", fmt17(u), opt(params.f_l(u)), opt(params.f_u(u)), fmt17(params.ell_1(u)));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p3() -> FlowParams {
        FlowParams::from_table(3, 1.0, E0Table::builtin()).unwrap()
    }

    #[test]
    fn lambda_values() {
        let l3 = lambda_p_default(3, &E0Table::builtin()).unwrap();
        assert!((l3 - 6f64.sqrt() * (2f64.sqrt() + 1.0)).abs() < 1e-12);
        let l4 = lambda_p_default(4, &E0Table::builtin()).unwrap();
        assert!((l4 - 4.0 * 6f64.sqrt()).abs() < 1e-12);
        assert!(matches!(lambda_p_default(5, &E0Table::builtin()), Err(Error::MissingE0 { index: 3, .. })));
        let l5 = lambda_p_default(5, &E0Table::builtin().with(3, 1.657)).unwrap();
        assert!((l5 - 20f64.sqrt() * (2f64.sqrt() + 1.657)).abs() < 1e-12);
    }

    #[test]
    fn closed_form_thresholds() {
        let f = p3();
        assert!((f.u_c() - 0.252_729_8).abs() < 1e-7);
        assert!((f.v_c() - 0.758_189_3).abs() < 1e-7);
        assert!(f.bar_u_c().is_infinite());
        let f4 = FlowParams::from_table(4, 1.0, E0Table::builtin()).unwrap();
        assert!((f4.u_c() - 0.234_412_4).abs() < 1e-7);
        let small = FlowParams::from_table(3, 0.1, E0Table::builtin()).unwrap();
        assert!((small.bar_u_c() - 0.141_980_8).abs() < 1e-7);
        assert!(small.bar_z_c().is_some());
    }

    #[test]
    fn fixed_points_are_zeros_of_phi() {
        let f = p3();
        let (a, b) = f.phi(FlowKind::Lower, f.z_c());
        assert!(a.abs() < 1e-12 && b.abs() < 1e-12);
        let g = FlowParams::from_table(3, 0.1, E0Table::builtin()).unwrap();
        let (a, b) = g.phi(FlowKind::Upper, g.bar_z_c().unwrap());
        assert!(a.abs() < 1e-12 && b.abs() < 1e-12);
    }

    #[test]
    fn f2_examples() {
        let f = p3();
        assert_eq!(f.f2_lower(0.0, 0.0), 12.0);
        assert!((f.f_l(f.u_c()).unwrap() - f.ell_1(f.u_c())).abs() < 1e-12);
        assert!((f.f_l(f.u_c()).unwrap() - 0.758_19).abs() < 1e-5);
        assert!(f.f2_lower(f.u_c(), f.v_c()).abs() < 1e-12);
    }

    #[test]
    fn f_u_domain_edge() {
        let f = p3();
        let edge = f.f_u_domain_start();
        assert!((edge - 1.304_53).abs() < 1e-5);
        assert!(f.f_u(edge - 1e-6).is_err());
        assert!(f.f_u(edge + 1e-3).is_ok());
    }

    #[test]
    fn f_l_increasing_right_of_u_c() {
        let f = p3();
        let uc = f.u_c();
        let vals: Vec<f64> = (0..=1000).map(|i| f.f_l(uc + 2.0 * i as f64 / 1000.0).unwrap()).collect();
        assert!(vals.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn stationary_at_z_c() {
        let f = p3();
        let t = integrate_flow(&f, FlowKind::Lower, f.z_c(), 1e-3, 10.0).unwrap();
        assert!(t.points.iter().all(|z| z.dist_inf(&f.z_c()) < 1e-8));
    }

    #[test]
    fn lower_flow_converges_and_graph_domain() {
        let f = p3();
        let t = integrate_flow(&f, FlowKind::Lower, PlanePoint::new(0.0, 3.0), 1e-3, 50.0).unwrap();
        assert!(t.last().dist_inf(&f.z_c()) < 1e-6);
        let g = graph_of_flow(&t, &f).unwrap();
        assert!(g.domain().1 >= f.u_c() - 1e-6);
        assert!(g.us.windows(2).all(|w| w[1] > w[0]));
        for (u, v) in g.us.iter().zip(&g.vs) {
            assert_eq!(g.eval(*u), Some(*v));
        }
    }

    #[test]
    fn upper_flow_grows_linearly_without_fixed_point() {
        let f = p3();
        let t = integrate_flow(&f, FlowKind::Upper, PlanePoint::new(0.0, 3.0), 1e-3, 50.0).unwrap();
        // linear growth: u(50) is about 202.6, far below 1e3
        assert!((t.last().u - 202.58).abs() < 0.1, "u(50) = {}", t.last().u);
        // the field stiffens like -6u, so the long run needs a smaller step
        let long = integrate_flow(&f, FlowKind::Upper, PlanePoint::new(0.0, 3.0), 1e-4, 300.0).unwrap();
        let t_hit = hitting_time(&long, |z| z.u > 1e3).unwrap();
        assert!(t_hit > 200.0 && t_hit < 300.0, "{t_hit}");
    }

    #[test]
    fn hitting_time_cases() {
        let f = p3();
        let t = integrate_flow(&f, FlowKind::Lower, PlanePoint::new(0.0, 3.0), 1e-3, 50.0).unwrap();
        assert_eq!(hitting_time(&t, |_| true), Some(0.0));
        assert_eq!(hitting_time(&t, |_| false), None);
        let zc = f.z_c();
        let t1 = hitting_time(&t, |z| z.dist_inf(&zc) <= 1e-3).unwrap();
        let t2 = hitting_time(&t, |z| z.dist_inf(&zc) <= 1e-2).unwrap();
        assert!(t2 < t1);
    }

    #[test]
    fn blow_up_is_reported() {
        let g = FlowParams::new(3, 1.0, 50.0).unwrap();
        match integrate_flow(&g, FlowKind::Upper, PlanePoint::new(0.0, 3.0), 1e-3, 50.0) {
            Err(Error::FlowBlowUp { time, partial }) => {
                assert!(time > 0.0 && !partial.is_empty());
            }
            other => panic!("expected blow-up, got {other:?}"),
        }
    }

    #[test]
    fn curve_csv_has_blank_outside_domain() {
        let f = p3();
        let csv = curve_table_csv(&f, &[0.0, 2.0]);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "u,f_L,f_U,ell1");
        assert!(lines[1].contains(",,"));
        assert!(!lines[2].contains(",,"));
    }
}
