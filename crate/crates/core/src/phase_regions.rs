//! Regions of the `(u, v)` plane and a phase-portrait verifier.
//!
//! `A0` is bounded above by the upper-flow graph from `z_c` and below by
//! `f_L` (no upper fixed point) or by the lower-flow graph started where the
//! upper flow from `z_c` returns to `F1 = 0`. The other regions are
//!
//! ```text
//! A4 = {u < 0}
//! A3 = {v <= min(ell_1, f_L)}
//! A2 = {v > ell_1} \ (A0 u A4)
//! A1 = the rest
//! ```
//!
//! and labels are assigned in the order A4, A0, A3, A2, A1.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::bounding_flows::{
    graph_of_flow, hitting_time, integrate_flow_until, FlowKind, FlowParams, GraphTable,
    PlanePoint, PlaneTrajectory, Terminal, DEFAULT_FLOW_STEP,
};
use crate::sphere_dynamics::fmt17;
use crate::{Error, Result};

pub const DEFAULT_GRID: f64 = 1e-3;
const BOUNDARY_HORIZON: f64 = 500.0;
const WINDOW_MARGIN: f64 = 0.5;
/// Relative slack of the absorbing-set test. Boundaries are linear
/// interpolants of flow trajectories, and flows that merge onto a boundary
/// ride it within a few 1e-6.
pub const ABSORBING_BAND: f64 = 1e-5;
/// Finest tabulation of the absorbing-set boundaries.
const ABSORBING_GRID: f64 = 1e-4;

/// `[-k_u, k_u] x [0, k_v]`
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub k_u: f64,
    pub k_v: f64,
}

impl Default for Window {
    fn default() -> Self {
        Self { k_u: 4.0, k_v: 40.0 }
    }
}

impl Window {
    pub fn contains(&self, u: f64, v: f64) -> bool {
        u >= -self.k_u && u <= self.k_u && v >= 0.0 && v <= self.k_v
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RegionLabel {
    A0,
    A1,
    A2,
    A3,
    A4,
}

/// Lower edge of `A0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum LowerBoundary {
    /// The zero curve `f_L` (no upper fixed point).
    FL,
    /// Lower-flow graph from the return point of the upper flow.
    Graph(GraphTable),
}

/// Upper-boundary graph, possibly open above past its last sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpperBoundary {
    pub table: GraphTable,
    /// The generating flow left every bounded set before the window edge,
    /// so the boundary is `+inf` to the right of the table.
    pub open_right: bool,
}

impl UpperBoundary {
    pub fn eval(&self, u: f64) -> Option<f64> {
        match self.table.eval(u) {
            Some(v) => Some(v),
            None if self.open_right && u > self.table.domain().1 => Some(f64::INFINITY),
            None => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseGeometry {
    pub params: FlowParams,
    pub window: Window,
    pub grid: f64,
    pub z_c: PlanePoint,
    pub bar_z_c: Option<PlanePoint>,
    pub gamma_u_zc: UpperBoundary,
    pub lower: LowerBoundary,
    /// Some boundary curve was truncated by the window or by blow-up.
    pub window_limited: bool,
}

/// Upper-flow graph from `start`, integrated past the window's right edge.
fn upper_graph(params: &FlowParams, start: PlanePoint, window: &Window, grid: f64) -> Result<(UpperBoundary, Terminal, bool)> {
    let limit = window.k_u + WINDOW_MARGIN;
    let stop = move |z: PlanePoint| z.u > limit;
    let (traj, blown) = match integrate_flow_until(
        params,
        FlowKind::Upper,
        start,
        DEFAULT_FLOW_STEP,
        BOUNDARY_HORIZON,
        Some(&stop),
    ) {
        Ok(t) => (t, false),
        Err(Error::FlowBlowUp { partial, .. }) => (*partial, true),
        Err(e) => return Err(e),
    };
    let terminal = traj.terminal;
    let mut table = graph_of_flow(&traj, params)?;
    if terminal == Terminal::Converged && !table.crossed {
        if let Some(zb) = params.bar_z_c() {
            if traj.last().dist_inf(&zb) < 1e-6 {
                table.extend_to(zb);
            }
        }
    }
    let limited = blown || terminal == Terminal::Stopped;
    Ok((UpperBoundary { table: table.resample(grid), open_right: blown }, terminal, limited))
}

/// Lower-flow graph from `start`; a converged end is closed off at `z_c`.
fn lower_graph(params: &FlowParams, start: PlanePoint, window: &Window, grid: f64) -> Result<GraphTable> {
    let k_u = window.k_u + WINDOW_MARGIN;
    let stop = move |z: PlanePoint| z.u < -k_u;
    let traj = integrate_flow_until(params, FlowKind::Lower, start, DEFAULT_FLOW_STEP, BOUNDARY_HORIZON, Some(&stop))?;
    let mut table = graph_of_flow(&traj, params)?;
    if traj.terminal == Terminal::Converged && traj.last().dist_inf(&params.z_c()) < 1e-6 {
        table.extend_to(params.z_c());
    }
    Ok(table.resample(grid))
}

/// Point where the upper flow from `start` returns to `F1 = 0` (or its
/// limit `bar z_c`).
fn upper_return_point(table: &UpperBoundary) -> PlanePoint {
    let t = &table.table;
    let (lo, hi) = t.domain();
    if t.direction > 0 {
        PlanePoint::new(hi, *t.vs.last().expect("non-empty"))
    } else {
        PlanePoint::new(lo, t.vs[0])
    }
}

pub fn build_geometry(params: &FlowParams, window: Window) -> Result<PhaseGeometry> {
    build_geometry_with_grid(params, window, DEFAULT_GRID)
}

pub fn build_geometry_with_grid(params: &FlowParams, window: Window, grid: f64) -> Result<PhaseGeometry> {
    let z_c = params.z_c();
    if !window.contains(z_c.u, z_c.v) {
        return Err(Error::GeometryWindow(format!(
            "window [-{0}, {0}] x [0, {1}] does not contain z_c = ({2}, {3})",
            window.k_u, window.k_v, z_c.u, z_c.v
        )));
    }
    if !(grid > 0.0) {
        return Err(Error::InvalidArgument("grid spacing must be positive".into()));
    }
    let (gamma_u_zc, _terminal, mut limited) = upper_graph(params, z_c, &window, grid)?;
    let lower = if params.has_upper_fixed_point() {
        let c = upper_return_point(&gamma_u_zc);
        if !window.contains(c.u, c.v) {
            limited = true;
        }
        LowerBoundary::Graph(lower_graph(params, c, &window, grid)?)
    } else {
        LowerBoundary::FL
    };
    Ok(PhaseGeometry {
        params: params.clone(),
        window,
        grid,
        z_c,
        bar_z_c: params.bar_z_c(),
        gamma_u_zc,
        lower,
        window_limited: limited,
    })
}

impl PhaseGeometry {
    fn f_l_or_inf(&self, u: f64) -> f64 {
        self.params.f_l(u).unwrap_or(f64::INFINITY)
    }

    /// Lower edge of `A0` at `u` when defined.
    pub fn a0_lower(&self, u: f64) -> Option<f64> {
        match &self.lower {
            LowerBoundary::FL => self.params.f_l(u).ok(),
            LowerBoundary::Graph(g) => g.eval(u),
        }
    }

    pub fn a0_upper(&self, u: f64) -> Option<f64> {
        self.gamma_u_zc.eval(u)
    }

    pub fn in_a0(&self, u: f64, v: f64) -> bool {
        match (self.a0_lower(u), self.a0_upper(u)) {
            (Some(lo), Some(hi)) => {
                let band = 1e-12 * (1.0 + v.abs());
                v >= lo - band && v <= hi + band
            }
            _ => false,
        }
    }

    pub fn classify(&self, u: f64, v: f64) -> Result<RegionLabel> {
        if !self.window.contains(u, v) {
            return Err(Error::OutsideWindow { u, v });
        }
        Ok(self.classify_unchecked(u, v))
    }

    fn classify_unchecked(&self, u: f64, v: f64) -> RegionLabel {
        let l1 = self.params.ell_1(u);
        if u < 0.0 {
            RegionLabel::A4
        } else if self.in_a0(u, v) {
            RegionLabel::A0
        } else if v <= l1.min(self.f_l_or_inf(u)) {
            RegionLabel::A3
        } else if v > l1 {
            RegionLabel::A2
        } else {
            RegionLabel::A1
        }
    }

    /// `A0` together with the sup-norm balls of radius `delta` at the fixed points.
    pub fn in_a0_delta(&self, delta: f64, u: f64, v: f64) -> bool {
        let z = PlanePoint::new(u, v);
        self.in_a0(u, v)
            || z.dist_inf(&self.z_c) <= delta
            || self.bar_z_c.is_some_and(|b| z.dist_inf(&b) <= delta)
    }

    /// Builds the absorbing enlargement for `epsilon`.
    pub fn absorbing_set(&self, epsilon: f64) -> Result<AbsorbingSet> {
        if !(epsilon > 0.0) {
            return Err(Error::InvalidArgument("epsilon must be positive".into()));
        }
        let p = &self.params;
        let z_eps = PlanePoint::new(p.u_c() - epsilon, p.ell_1(p.u_c() - epsilon));
        if z_eps.u < 0.0 {
            return Err(Error::InvalidArgument(format!("epsilon {epsilon} exceeds u_c = {}", p.u_c())));
        }
        let grid = self.grid.min(ABSORBING_GRID);
        let (upper, _, _) = upper_graph(p, z_eps, &self.window, grid)?;
        let lower = match self.bar_z_c {
            Some(zb) => {
                let zb_eps = PlanePoint::new(zb.u + epsilon, p.ell_1(zb.u + epsilon));
                let ret = upper_return_point(&upper);
                let start = if zb_eps.u >= ret.u { zb_eps } else { ret };
                Some(lower_graph(p, start, &self.window, grid)?)
            }
            None => None,
        };
        Ok(AbsorbingSet { geometry: self.clone(), epsilon, upper, lower })
    }

    pub fn in_absorbing(&self, epsilon: f64, u: f64, v: f64) -> Result<bool> {
        Ok(self.absorbing_set(epsilon)?.contains(u, v))
    }

    /// CSV of the boundary curves on the cached grid over the window.
    pub fn boundaries_csv(&self) -> String {
        let mut s = String::from("u,ell1,f_L,a0_lower,a0_upper\n");
        let k = (2.0 * self.window.k_u / self.grid).round() as usize;
        let opt = |x: Option<f64>| x.filter(|v| v.is_finite()).map(fmt17).unwrap_or_default();
        for i in 0..=k {
            let u = -self.window.k_u + i as f64 * self.grid;
            let _ = writeln!(
                s,
                "{},{},{},{},{}",
                fmt17(u),
                fmt17(self.params.ell_1(u)),
                opt(self.params.f_l(u).ok()),
                opt(self.a0_lower(u)),
                opt(self.a0_upper(u))
            );
        }
        s
    }
}

/// The absorbing set for one `epsilon`.
#[derive(Debug, Clone)]
pub struct AbsorbingSet {
    pub geometry: PhaseGeometry,
    pub epsilon: f64,
    /// Upper-flow graph from `z(eps)`.
    pub upper: UpperBoundary,
    /// Lower-flow graph closing the set on the right (finite `bar u_c`).
    pub lower: Option<GraphTable>,
}

impl AbsorbingSet {
    fn lower_edge(&self, u: f64) -> f64 {
        let p = &self.geometry.params;
        let l1 = p.ell_1(u);
        match &self.lower {
            None => l1.min(p.f_l(u).unwrap_or(f64::INFINITY)),
            Some(g) => match g.eval(u) {
                Some(v) => l1.min(v),
                None => l1,
            },
        }
    }

    fn in_a_eps(&self, u: f64, v: f64) -> bool {
        let hi = match (self.upper.eval(u), &self.lower) {
            (Some(hi), _) => hi,
            // right of the upper graph's limit point: closed by ell_1 up to bar z(eps)
            (None, Some(g)) if u > self.upper.table.domain().1 && u <= g.domain().1 => self.geometry.params.ell_1(u),
            _ => return false,
        };
        if let Some(g) = &self.lower {
            // the lower graph closes the set on the right
            if u > g.domain().1 {
                return false;
            }
        }
        let band = ABSORBING_BAND * (1.0 + v.abs());
        v >= self.lower_edge(u) - band && v <= hi + band
    }

    fn in_box(&self, center: PlanePoint, u: f64, v: f64, below: bool) -> bool {
        let p = &self.geometry.params;
        let e = self.epsilon;
        let (v_lo, v_hi) = (p.ell_1(center.u - e), p.ell_1(center.u + e));
        let f1 = p.f1(u, v);
        let side = if below { f1 <= 0.0 } else { f1 >= 0.0 };
        (u - center.u).abs() <= e && v >= v_lo && v <= v_hi && side
    }

    pub fn contains(&self, u: f64, v: f64) -> bool {
        if !self.geometry.window.contains(u, v) {
            return false;
        }
        self.in_a_eps(u, v)
            || self.in_box(self.geometry.z_c, u, v, true)
            || self.geometry.bar_z_c.is_some_and(|b| self.in_box(b, u, v, false))
    }
}

/// Largest `delta` (bisection) such that `A_{0,delta}` lies in the
/// absorbing set, checked on a grid over the balls and over `A0`.
pub fn calibrate_delta(geometry: &PhaseGeometry, epsilon: f64) -> Result<f64> {
    let abs = geometry.absorbing_set(epsilon)?;
    let w = geometry.window;
    let (m, k) = (200usize, 200usize);
    for i in 0..=m {
        for j in 0..=k {
            let u = -w.k_u + 2.0 * w.k_u * i as f64 / m as f64;
            let v = w.k_v * j as f64 / k as f64;
            if geometry.in_a0(u, v) && !abs.contains(u, v) {
                return Err(Error::Invariant(format!("A0 point ({u}, {v}) is outside the absorbing set")));
            }
        }
    }
    let mut centers = vec![geometry.z_c];
    centers.extend(geometry.bar_z_c);
    let ok = |d: f64| {
        centers.iter().all(|c| {
            (0..=40).all(|i| {
                (0..=40).all(|j| {
                    let u = c.u - d + 2.0 * d * i as f64 / 40.0;
                    let v = c.v - d + 2.0 * d * j as f64 / 40.0;
                    !w.contains(u, v) || abs.contains(u, v)
                })
            })
        })
    };
    let (mut lo, mut hi) = (0.0, epsilon);
    if ok(hi) {
        return Ok(hi);
    }
    for _ in 0..40 {
        let mid = 0.5 * (lo + hi);
        if ok(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    if lo <= 0.0 {
        return Err(Error::Invariant("no positive delta keeps A_{0,delta} inside the absorbing set".into()));
    }
    Ok(lo)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub t: f64,
    pub region: RegionLabel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PortraitViolation {
    pub t: f64,
    pub from: Option<RegionLabel>,
    pub to: Option<RegionLabel>,
    pub rule: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PortraitReport {
    pub transitions: Vec<Transition>,
    #[serde(rename = "tau_A0delta")]
    pub tau_a0_delta: Option<f64>,
    pub tau_absorbing: Option<f64>,
    pub violations: Vec<PortraitViolation>,
    /// Samples outside the window (flagged, not counted as violations).
    pub window_exits: usize,
}

impl PortraitReport {
    pub fn arrow_violations(&self) -> usize {
        self.violations.iter().filter(|v| v.rule != "absorbing-exit").count()
    }

    pub fn absorbing_exits(&self) -> usize {
        self.violations.iter().filter(|v| v.rule == "absorbing-exit").count()
    }
}

/// Allowed successor regions of a transition.
pub fn allowed_successors(from: RegionLabel) -> &'static [RegionLabel] {
    use RegionLabel::*;
    match from {
        A4 => &[A2],
        A3 => &[A0, A1, A2],
        A2 => &[A0, A1],
        A1 => &[A0],
        A0 => &[A1, A2, A3, A4],
    }
}

/// Checks a path against the phase-portrait arrows and the absorbing set.
pub fn verify_portrait(geometry: &PhaseGeometry, traj: &PlaneTrajectory, epsilon: f64, delta: f64) -> Result<PortraitReport> {
    let abs = geometry.absorbing_set(epsilon)?;
    let mut transitions: Vec<Transition> = Vec::new();
    let mut violations = Vec::new();
    let mut window_exits = 0;
    let mut current: Option<RegionLabel> = None;
    let mut entered = false;
    let mut inside_prev = false;
    for (&t, z) in traj.times.iter().zip(&traj.points) {
        let inside = abs.contains(z.u, z.v);
        if entered && inside_prev && !inside {
            violations.push(PortraitViolation { t, from: current, to: None, rule: "absorbing-exit".into() });
        }
        entered |= inside;
        inside_prev = inside;
        if !geometry.window.contains(z.u, z.v) {
            window_exits += 1;
            continue;
        }
        let label = geometry.classify_unchecked(z.u, z.v);
        match current {
            None => transitions.push(Transition { t, region: label }),
            Some(prev) if prev != label => {
                if !allowed_successors(prev).contains(&label) {
                    violations.push(PortraitViolation {
                        t,
                        from: Some(prev),
                        to: Some(label),
                        rule: format!("{prev:?} may only move to {:?}", allowed_successors(prev)),
                    });
                }
                transitions.push(Transition { t, region: label });
            }
            _ => {}
        }
        current = Some(label);
    }
    Ok(PortraitReport {
        transitions,
        tau_a0_delta: hitting_time(traj, |z| geometry.in_a0_delta(delta, z.u, z.v)),
        tau_absorbing: hitting_time(traj, |z| abs.contains(z.u, z.v)),
        violations,
        window_exits,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bounding_flows::{integrate_flow, E0Table};

    fn geo(beta: f64) -> PhaseGeometry {
        let p = FlowParams::from_table(3, beta, E0Table::builtin()).unwrap();
        build_geometry(&p, Window::default()).unwrap()
    }

    #[test]
    fn infinite_branch_uses_f_l() {
        let g = geo(1.0);
        assert_eq!(g.lower, LowerBoundary::FL);
        for i in 0..100 {
            let u = g.z_c.u + i as f64 * 0.03;
            assert!((g.a0_lower(u).unwrap() - g.params.f_l(u).unwrap()).abs() < 1e-10);
        }
    }

    #[test]
    fn finite_branch_has_both_fixed_points() {
        let g = geo(0.1);
        assert!((g.params.bar_u_c() - 0.141_980_8).abs() < 1e-7);
        assert!(g.bar_z_c.is_some());
        assert!(matches!(g.lower, LowerBoundary::Graph(_)));
    }

    #[test]
    fn window_guard() {
        let p = FlowParams::from_table(3, 1.0, E0Table::builtin()).unwrap();
        let err = build_geometry(&p, Window { k_u: 0.1, k_v: 40.0 }).unwrap_err();
        assert!(matches!(err, Error::GeometryWindow(_)));
    }

    #[test]
    fn classify_examples() {
        let g = geo(1.0);
        assert_eq!(g.classify(-1.0, 0.0).unwrap(), RegionLabel::A4);
        assert_eq!(g.classify(0.0, 0.0).unwrap(), RegionLabel::A3);
        assert!(g.classify(5.0, 0.0).is_err());
        for beta in [1.0, 0.1] {
            let g = geo(beta);
            let ub = g.params.bar_u_c().min(g.window.k_u);
            let um = 0.5 * (g.params.u_c() + ub);
            assert_eq!(g.classify(um, g.params.ell_1(um)).unwrap(), RegionLabel::A0);
        }
    }

    #[test]
    fn a0_contains_segment_and_sits_above_z_c() {
        for beta in [1.0, 0.1] {
            let g = geo(beta);
            let p = &g.params;
            let ub = p.bar_u_c().min(g.window.k_u / 2.0);
            for i in 0..100 {
                let u = p.u_c() + (ub - p.u_c()) * i as f64 / 99.0;
                assert!(g.in_a0(u, p.ell_1(u)), "beta={beta} u={u}");
            }
            for i in 0..200 {
                for j in 0..200 {
                    let u = -4.0 + 8.0 * i as f64 / 199.0;
                    let v = 40.0 * j as f64 / 199.0;
                    if g.in_a0(u, v) {
                        assert!(u >= p.u_c() - 1e-12 && v >= p.v_c() - 1e-9);
                    }
                }
            }
        }
    }

    #[test]
    fn classification_is_total() {
        let g = geo(1.0);
        for i in 0..=800 {
            for j in (0..=4000).step_by(7) {
                let (u, v) = (-4.0 + i as f64 * 0.01, j as f64 * 0.01);
                assert!(g.classify(u, v).is_ok());
            }
        }
    }

    #[test]
    fn delta_balls_nest() {
        let g = geo(1.0);
        assert!(g.in_a0_delta(1e-9, g.z_c.u, g.z_c.v));
        for i in 0..50 {
            for j in 0..50 {
                let (u, v) = (g.z_c.u - 0.2 + i as f64 * 0.008, g.z_c.v - 0.2 + j as f64 * 0.008);
                if g.in_a0_delta(0.05, u, v) {
                    assert!(g.in_a0_delta(0.1, u, v));
                }
            }
        }
    }

    #[test]
    fn constant_path_at_z_c() {
        let g = geo(1.0);
        let t = PlaneTrajectory::constant(g.z_c, (0..10).map(|i| i as f64 * 0.1).collect()).unwrap();
        let r = verify_portrait(&g, &t, 0.1, 0.01).unwrap();
        assert_eq!(r.transitions.len(), 1);
        assert_eq!(r.transitions[0].region, RegionLabel::A0);
        assert_eq!(r.tau_a0_delta, Some(0.0));
        assert!(r.violations.is_empty());
    }

    #[test]
    fn lower_flow_from_uniform_proxy() {
        let g = geo(1.0);
        let delta = calibrate_delta(&g, 0.1).unwrap();
        let t = integrate_flow(&g.params, FlowKind::Lower, PlanePoint::new(0.0, 3.0), 1e-3, 50.0).unwrap();
        let r = verify_portrait(&g, &t, 0.1, delta).unwrap();
        assert!(r.violations.is_empty(), "{:?}", r.violations);
        assert!(r.tau_a0_delta.is_some());
    }

    #[test]
    fn report_json_field_names() {
        let g = geo(1.0);
        let t = PlaneTrajectory::constant(g.z_c, vec![0.0, 1.0]).unwrap();
        let r = verify_portrait(&g, &t, 0.1, 0.01).unwrap();
        let js = serde_json::to_value(&r).unwrap();
        for k in ["transitions", "tau_A0delta", "tau_absorbing", "violations"] {
            assert!(js.get(k).is_some(), "{k}");
        }
    }
}
