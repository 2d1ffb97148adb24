//! Comparison checkers for planar paths against the bounding flows.
//!
//! Condition I asks that `u' = F1(u, v)` and `F2_L <= v' <= F2_U` along the
//! path. The checkers here test that in integrated form over windows, the
//! graph ordering `gamma_L <= gamma <= gamma_U` over `u`, and the
//! componentwise rectangle ordering while the corner `(A_L^1, A_U^2)` stays
//! in `V- = {v < 2pu/beta}`.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::bounding_flows::{
    graph_of_flow, integrate_flow, rk4_integrate, FlowKind, FlowParams, GraphTable, PlanePoint,
    PlaneTrajectory, Rk4Options, DEFAULT_FLOW_STEP,
};
use crate::sphere_dynamics::{fmt17, slope_and_se, TrajectoryRecord};
use crate::{Error, Result};

/// Discretization allowance per unit step used by [`condition_i_check`].
pub const DEFAULT_C_H: f64 = 10.0;
const MAX_SAMPLES: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum Tolerance {
    Fixed { tol: f64 },
    /// `k_sigma * slope SE + c_h * step`
    Stochastic { k_sigma: f64, c_h: f64, step: f64 },
}

impl Tolerance {
    fn of(&self, se: f64) -> f64 {
        match *self {
            Tolerance::Fixed { tol } => tol,
            Tolerance::Stochastic { k_sigma, c_h, step } => k_sigma * se + c_h * step,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowCheck {
    pub t_start: f64,
    pub t_end: f64,
    pub du_dt: f64,
    pub f1: f64,
    pub dv_dt: f64,
    pub f2_lower: f64,
    pub f2_upper: f64,
    pub tol_u: f64,
    pub tol_v: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionIReport {
    pub windows: usize,
    pub ok: usize,
    pub fraction_ok: f64,
    /// Largest distance outside the tolerance-free band.
    pub worst_excursion: f64,
    pub worst_t: f64,
    pub tolerance: Tolerance,
    pub mean_tol_u: f64,
    pub mean_tol_v: f64,
    /// First failing windows.
    pub failures: Vec<WindowCheck>,
}

/// Time average of `f` over the window: composite Simpson (with a 3/8 panel
/// for an odd interval count) on uniform samples, trapezoid otherwise.
fn window_mean(t: &[f64], f: &[f64]) -> f64 {
    let n = t.len() - 1;
    let len = t[n] - t[0];
    let h = len / n as f64;
    let uniform = t.windows(2).all(|w| ((w[1] - w[0]) - h).abs() <= 1e-6 * h);
    if !uniform || n < 2 {
        let s: f64 = t.windows(2).zip(f.windows(2)).map(|(a, b)| 0.5 * (b[0] + b[1]) * (a[1] - a[0])).sum();
        return s / len;
    }
    let simpson = |g: &[f64]| {
        let m = g.len() - 1;
        let inner: f64 = (1..m).map(|i| if i % 2 == 1 { 4.0 * g[i] } else { 2.0 * g[i] }).sum();
        h / 3.0 * (g[0] + g[m] + inner)
    };
    let s = if n % 2 == 0 {
        simpson(f)
    } else if n == 3 {
        3.0 * h / 8.0 * (f[0] + 3.0 * f[1] + 3.0 * f[2] + f[3])
    } else {
        let k = n - 3;
        simpson(&f[..=k]) + 3.0 * h / 8.0 * (f[k] + 3.0 * f[k + 1] + 3.0 * f[k + 2] + f[k + 3])
    };
    s / len
}

/// Windowed Condition-I test of the series `(t, u, v)`.
pub fn condition_i_series(
    params: &FlowParams,
    t: &[f64],
    u: &[f64],
    v: &[f64],
    window: usize,
    tolerance: Tolerance,
) -> Result<ConditionIReport> {
    if window < 2 {
        return Err(Error::InvalidArgument("window must span at least 2 samples".into()));
    }
    if t.len() < 3 * window {
        return Err(Error::WindowTooLong { window: 3 * window, len: t.len() });
    }
    let f1: Vec<f64> = u.iter().zip(v).map(|(&a, &b)| params.f1(a, b)).collect();
    let fl: Vec<f64> = u.iter().zip(v).map(|(&a, &b)| params.f2_lower(a, b)).collect();
    let fu: Vec<f64> = u.iter().zip(v).map(|(&a, &b)| params.f2_upper(a, b)).collect();
    let (mut ok, mut worst, mut worst_t) = (0, 0.0f64, t[0]);
    let (mut sum_tu, mut sum_tv) = (0.0, 0.0);
    let mut failures = Vec::new();
    let count = t.len() - window + 1;
    for s in 0..count {
        let r = s..s + window;
        let ts = &t[r.clone()];
        let (du, se_u) = slope_and_se(ts, &u[r.clone()]);
        let (dv, se_v) = slope_and_se(ts, &v[r.clone()]);
        let c = WindowCheck {
            t_start: ts[0],
            t_end: ts[window - 1],
            du_dt: du,
            f1: window_mean(ts, &f1[r.clone()]),
            dv_dt: dv,
            f2_lower: window_mean(ts, &fl[r.clone()]),
            f2_upper: window_mean(ts, &fu[r]),
            tol_u: tolerance.of(se_u),
            tol_v: tolerance.of(se_v),
        };
        sum_tu += c.tol_u;
        sum_tv += c.tol_v;
        let ex_u = (c.du_dt - c.f1).abs();
        let ex_v = (c.f2_lower - c.dv_dt).max(c.dv_dt - c.f2_upper).max(0.0);
        if ex_u.max(ex_v) > worst {
            worst = ex_u.max(ex_v);
            worst_t = c.t_start;
        }
        if ex_u <= c.tol_u && ex_v <= c.tol_v {
            ok += 1;
        } else if failures.len() < MAX_SAMPLES {
            failures.push(c);
        }
    }
    Ok(ConditionIReport {
        windows: count,
        ok,
        fraction_ok: ok as f64 / count as f64,
        worst_excursion: worst,
        worst_t,
        tolerance,
        mean_tol_u: sum_tu / count as f64,
        mean_tol_v: sum_tv / count as f64,
        failures,
    })
}

/// Condition-I check of a simulated record with tolerance
/// `k_sigma * SE + DEFAULT_C_H * h`.
pub fn condition_i_check(params: &FlowParams, record: &TrajectoryRecord, window: usize, k_sigma: f64) -> Result<ConditionIReport> {
    let tol = Tolerance::Stochastic { k_sigma, c_h: DEFAULT_C_H, step: record.config.step };
    condition_i_series(params, &record.times, &record.u, &record.v, window, tol)
}

pub fn condition_i_check_path(params: &FlowParams, path: &PlaneTrajectory, window: usize, tolerance: Tolerance) -> Result<ConditionIReport> {
    let u: Vec<f64> = path.points.iter().map(|z| z.u).collect();
    let v: Vec<f64> = path.points.iter().map(|z| z.v).collect();
    condition_i_series(params, &path.times, &u, &v, window, tolerance)
}

/// Integrates `u' = F1`, `v' = F2(u, v, w)` with `w = control(t, z)`,
/// rejecting any `|w| > Lambda_p v`.
pub fn synthesize_condition_i(
    params: &FlowParams,
    init: PlanePoint,
    control: &dyn Fn(f64, PlanePoint) -> f64,
    step: f64,
    horizon: f64,
) -> Result<PlaneTrajectory> {
    let mut field = |t: f64, z: PlanePoint| {
        let w = control(t, z);
        let bound = params.lambda_p * z.v;
        if !(w.abs() <= bound * (1.0 + 1e-12)) {
            return Err(Error::ControlBound { t, w, bound });
        }
        Ok((params.f1(z.u, z.v), params.f2_full(z.u, z.v, w)))
    };
    let opts = Rk4Options { step, horizon, converge_tol: None, stop: None };
    rk4_integrate(&mut field, init, &opts)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraphSample {
    pub u: f64,
    pub gamma_l: f64,
    pub gamma: f64,
    pub gamma_u: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphConfinementReport {
    /// `+1` when `u` increases along the path (`F1 > 0` at the start).
    pub direction: i8,
    pub tol: f64,
    pub checked: usize,
    pub violations: usize,
    pub max_violation: f64,
    pub domain_lower: (f64, f64),
    pub domain_subject: (f64, f64),
    pub domain_upper: (f64, f64),
    /// Domain inclusion chain; `None` unless all three graphs end on `F1 = 0`.
    pub domain_chain_holds: Option<bool>,
    pub samples: Vec<GraphSample>,
}

impl GraphConfinementReport {
    pub fn violation_fraction(&self) -> f64 {
        if self.checked == 0 {
            0.0
        } else {
            self.violations as f64 / self.checked as f64
        }
    }

    /// `u,gamma_L,gamma,gamma_U`
    pub fn to_csv(&self) -> String {
        let mut s = String::from("u,gamma_L,gamma,gamma_U\n");
        for g in &self.samples {
            let _ = writeln!(s, "{},{},{},{}", fmt17(g.u), fmt17(g.gamma_l), fmt17(g.gamma), fmt17(g.gamma_u));
        }
        s
    }
}

const GRAPH_HORIZON: f64 = 50.0;
const GRAPH_GRID: usize = 1000;

fn flow_graph(params: &FlowParams, kind: FlowKind, init: PlanePoint, horizon: f64) -> Result<GraphTable> {
    let traj = match integrate_flow(params, kind, init, DEFAULT_FLOW_STEP, horizon) {
        Ok(t) => t,
        Err(Error::FlowBlowUp { partial, .. }) => *partial,
        Err(e) => return Err(e),
    };
    graph_of_flow(&traj, params)
}

/// Compares the graph of `subject` with the bounding-flow graphs from `init`
/// on a uniform grid over the common domain.
pub fn graph_confinement_check(params: &FlowParams, subject: &PlaneTrajectory, init: PlanePoint, tol: f64) -> Result<GraphConfinementReport> {
    let f1 = params.f1(init.u, init.v);
    let scale = 1e-12 * (f64::from(params.p) * init.u.abs() + params.beta * init.v.abs() + 1.0);
    if f1.abs() <= scale && init.u >= params.u_c() && init.u <= params.bar_u_c() {
        return Err(Error::NotAGraph(format!(
            "start ({}, {}) lies on F1 = 0 inside [u_c, bar u_c]",
            init.u, init.v
        )));
    }
    if subject.first().dist_inf(&init) > 1e-9 * (1.0 + init.norm()) {
        return Err(Error::InvalidArgument("subject does not start at init".into()));
    }
    let horizon = subject.end_time().max(GRAPH_HORIZON);
    let gl = flow_graph(params, FlowKind::Lower, init, horizon)?;
    let gu = flow_graph(params, FlowKind::Upper, init, horizon)?;
    let g = graph_of_flow(subject, params)?;
    let (dl, dg, du) = (gl.domain(), g.domain(), gu.domain());
    let lo = dl.0.max(dg.0).max(du.0);
    let hi = dl.1.min(dg.1).min(du.1);
    let mut samples = Vec::new();
    let (mut violations, mut max_violation) = (0, 0.0f64);
    if hi > lo {
        for i in 0..=GRAPH_GRID {
            let u = lo + (hi - lo) * i as f64 / GRAPH_GRID as f64;
            let (Some(a), Some(b), Some(c)) = (gl.eval(u), g.eval(u), gu.eval(u)) else { continue };
            let excess = (a - b).max(b - c).max(0.0);
            max_violation = max_violation.max(excess);
            if excess > tol {
                violations += 1;
            }
            samples.push(GraphSample { u, gamma_l: a, gamma: b, gamma_u: c });
        }
    }
    let eps = 1e-6;
    let chain = (gl.crossed && g.crossed && gu.crossed).then(|| {
        if g.direction > 0 {
            dl.1 <= dg.1 + eps && dg.1 <= du.1 + eps
        } else {
            du.0 <= dg.0 + eps && dg.0 <= dl.0 + eps
        }
    });
    Ok(GraphConfinementReport {
        direction: g.direction,
        tol,
        checked: samples.len(),
        violations,
        max_violation,
        domain_lower: dl,
        domain_subject: dg,
        domain_upper: du,
        domain_chain_holds: chain,
        samples,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RectangleViolation {
    pub t: f64,
    pub lower: PlanePoint,
    pub subject: PlanePoint,
    pub upper: PlanePoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RectangleReport {
    pub tol: f64,
    /// Exit time of the corner `(A_L^1, A_U^2)` from `V-`; `None` if it stays
    /// inside over the subject's horizon.
    pub tau_box: Option<f64>,
    pub checked: usize,
    pub violations: usize,
    pub max_violation: f64,
    pub first_violation: Option<RectangleViolation>,
}

pub fn in_v_minus(params: &FlowParams, z: PlanePoint) -> bool {
    z.v < 2.0 * f64::from(params.p) * z.u / params.beta
}

fn fixed_horizon_flow(params: &FlowParams, kind: FlowKind, init: PlanePoint, horizon: f64) -> Result<PlaneTrajectory> {
    let mut field = |_t: f64, z: PlanePoint| Ok(params.phi(kind, z));
    let opts = Rk4Options { step: DEFAULT_FLOW_STEP, horizon, converge_tol: None, stop: None };
    rk4_integrate(&mut field, init, &opts)
}

/// Componentwise check `A_L(t) <= subject(t) <= A_U(t)` for `t` up to the
/// corner's exit from `V-`.
pub fn rectangle_check(params: &FlowParams, subject: &PlaneTrajectory, init: PlanePoint, tol: f64) -> Result<RectangleReport> {
    if !in_v_minus(params, init) {
        return Err(Error::OutsideVMinus { u: init.u, v: init.v });
    }
    let horizon = subject.end_time();
    let lower = fixed_horizon_flow(params, FlowKind::Lower, init, horizon)?;
    let upper = fixed_horizon_flow(params, FlowKind::Upper, init, horizon)?;
    let mut tau_box = None;
    for (&t, (l, u)) in lower.times.iter().zip(lower.points.iter().zip(&upper.points)) {
        if !in_v_minus(params, PlanePoint::new(l.u, u.v)) {
            tau_box = Some(t);
            break;
        }
    }
    let t_max = tau_box.unwrap_or(horizon).min(lower.end_time()).min(upper.end_time());
    let (mut checked, mut violations, mut max_violation) = (0, 0, 0.0f64);
    let mut first_violation = None;
    for (&t, &s) in subject.times.iter().zip(&subject.points) {
        if t > t_max {
            break;
        }
        let (Some(l), Some(u)) = (lower.at(t), upper.at(t)) else { continue };
        checked += 1;
        let excess = (l.u - s.u).max(l.v - s.v).max(s.u - u.u).max(s.v - u.v).max(0.0);
        max_violation = max_violation.max(excess);
        if excess > tol {
            violations += 1;
            if first_violation.is_none() {
                first_violation = Some(RectangleViolation { t, lower: l, subject: s, upper: u });
            }
        }
    }
    Ok(RectangleReport { tol, tau_box, checked, violations, max_violation, first_violation })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bounding_flows::E0Table;

    fn p3() -> FlowParams {
        FlowParams::from_table(3, 1.0, E0Table::builtin()).unwrap()
    }

    #[test]
    fn saturated_controls_match_flows() {
        let f = p3();
        let init = PlanePoint::new(0.0, 3.0);
        let lam = f.lambda_p;
        let a = synthesize_condition_i(&f, init, &|_, z| lam * z.v, 1e-3, 5.0).unwrap();
        let b = fixed_horizon_flow(&f, FlowKind::Lower, init, 5.0).unwrap();
        let c = synthesize_condition_i(&f, init, &|_, z| -lam * z.v, 1e-3, 5.0).unwrap();
        let d = fixed_horizon_flow(&f, FlowKind::Upper, init, 5.0).unwrap();
        for i in 0..a.len() {
            assert!(a.points[i].dist_inf(&b.points[i]) < 1e-8);
            assert!(c.points[i].dist_inf(&d.points[i]) < 1e-8 * (1.0 + d.points[i].norm()));
        }
    }

    #[test]
    fn zero_control_is_stationary_at_ansatz_point() {
        let f = p3();
        let z = PlanePoint::new(1.0, 3.0);
        let t = synthesize_condition_i(&f, z, &|_, _| 0.0, 1e-3, 2.0).unwrap();
        assert!(t.last().dist_inf(&z) < 1e-12);
    }

    #[test]
    fn control_bound_enforced() {
        let f = p3();
        let lam = f.lambda_p;
        let r = synthesize_condition_i(&f, PlanePoint::new(0.0, 3.0), &|_, z| 1.5 * lam * z.v, 1e-3, 1.0);
        assert!(matches!(r, Err(Error::ControlBound { .. })));
    }

    #[test]
    fn exact_flows_pass_condition_i() {
        let f = p3();
        let lam = f.lambda_p;
        let lower = integrate_flow(&f, FlowKind::Lower, PlanePoint::new(0.0, 3.0), 1e-3, 5.0).unwrap();
        let r = condition_i_check_path(&f, &lower, 20, Tolerance::Fixed { tol: 1e-6 }).unwrap();
        assert_eq!(r.fraction_ok, 1.0, "{:?}", r.failures.first());
        let s = synthesize_condition_i(&f, PlanePoint::new(0.0, 3.0), &|t, z| lam * z.v * t.sin(), 1e-3, 5.0).unwrap();
        let r = condition_i_check_path(&f, &s, 20, Tolerance::Fixed { tol: 1e-6 }).unwrap();
        assert_eq!(r.fraction_ok, 1.0, "{:?}", r.failures.first());
    }

    #[test]
    fn graph_check_on_lower_flow() {
        let f = p3();
        let init = PlanePoint::new(0.0, 3.0);
        let lower = integrate_flow(&f, FlowKind::Lower, init, 1e-3, 50.0).unwrap();
        let r = graph_confinement_check(&f, &lower, init, 1e-9).unwrap();
        assert_eq!(r.violations, 0);
        assert!(r.samples.iter().all(|s| (s.gamma - s.gamma_l).abs() < 1e-12));
        assert!(r.to_csv().starts_with("u,gamma_L,gamma,gamma_U\n"));
    }

    #[test]
    fn graph_check_rejects_degenerate_start() {
        let f = p3();
        let z = f.z_c();
        let t = PlaneTrajectory::constant(z, vec![0.0, 1.0]).unwrap();
        assert!(matches!(graph_confinement_check(&f, &t, z, 1e-6), Err(Error::NotAGraph(_))));
    }

    #[test]
    fn rectangle_on_lower_flow_and_precondition() {
        let f = p3();
        let init = PlanePoint::new(1.0, 1.0);
        let lower = fixed_horizon_flow(&f, FlowKind::Lower, init, 3.0).unwrap();
        let r = rectangle_check(&f, &lower, init, 1e-10).unwrap();
        assert_eq!(r.violations, 0);
        assert!(r.checked > 0);
        assert!(matches!(
            rectangle_check(&f, &lower, PlanePoint::new(0.1, 1.0), 1e-8),
            Err(Error::OutsideVMinus { .. })
        ));
    }

    #[test]
    fn report_serializes() {
        let f = p3();
        let lower = integrate_flow(&f, FlowKind::Lower, PlanePoint::new(0.0, 3.0), 1e-3, 1.0).unwrap();
        let r = condition_i_check_path(&f, &lower, 10, Tolerance::Fixed { tol: 1e-6 }).unwrap();
        let js = serde_json::to_value(&r).unwrap();
        assert_eq!(js["tolerance"]["mode"], "fixed");
        assert!(js["fraction_ok"].as_f64().unwrap() <= 1.0);
    }
}
