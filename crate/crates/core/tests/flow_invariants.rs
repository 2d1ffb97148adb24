use proptest::prelude::*;
use pspin_core::bounding_flows::{
    integrate_flow, lambda_p_default, u_c_formula, E0Table, FlowKind, FlowParams, PlanePoint, DEFAULT_FLOW_STEP,
};
use pspin_core::comparison::{
    condition_i_check_path, graph_confinement_check, rectangle_check, synthesize_condition_i, Tolerance,
};

fn params(p: u32, beta: f64) -> FlowParams {
    FlowParams::from_table(p, beta, E0Table::builtin()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn f2_bracketed(p in 3u32..=4, beta in 0.01f64..10.0, u in -4.0f64..4.0, v in 0.0f64..40.0, s in -1.0f64..1.0) {
        let fp = params(p, beta);
        let w = s * fp.lambda_p * v;
        let mid = fp.f2_full(u, v, w);
        let scale = 1.0 + mid.abs();
        prop_assert!(fp.f2_lower(u, v) <= mid + 1e-12 * scale);
        prop_assert!(mid <= fp.f2_upper(u, v) + 1e-12 * scale);
    }

    #[test]
    fn lower_nullcline_below_upper(p in 3u32..=4, beta in 0.05f64..5.0, t in 0.0f64..1.0) {
        let fp = params(p, beta);
        let u = fp.f_u_domain_start() + 1e-6 + 4.0 * t;
        if let (Ok(l), Ok(up)) = (fp.f_l(u), fp.f_u(u)) {
            prop_assert!(l < up, "u={u} f_L={l} f_U={up}");
        }
    }

    #[test]
    fn u_c_increasing_concave(p in 3u32..=4, b in 0.01f64..50.0, h in 0.01f64..1.0) {
        let lam = lambda_p_default(p, &E0Table::builtin()).unwrap();
        let (a, m, c) = (u_c_formula(p, b, lam), u_c_formula(p, b + h, lam), u_c_formula(p, b + 2.0 * h, lam));
        prop_assert!(m > a);
        prop_assert!(m - a >= c - m - 1e-14);
    }

    #[test]
    fn order_preserved_by_control(u0 in -2.0f64..2.0, v0 in 0.5f64..10.0, s1 in -1.0f64..1.0, s2 in -1.0f64..1.0) {
        let fp = params(3, 1.0);
        let (lo, hi) = if s1 <= s2 { (s1, s2) } else { (s2, s1) };
        let z = PlanePoint::new(u0, v0);
        let a = synthesize_condition_i(&fp, z, &|_, q| lo * fp.lambda_p * q.v, DEFAULT_FLOW_STEP, 0.1).unwrap();
        let b = synthesize_condition_i(&fp, z, &|_, q| hi * fp.lambda_p * q.v, DEFAULT_FLOW_STEP, 0.1).unwrap();
        prop_assert!(a.last().v >= b.last().v - 1e-12);
    }
}

#[test]
fn controlled_paths_stay_between_bounding_graphs() {
    let fp = params(3, 1.0);
    let starts = [(0.0, 3.0), (1.6, 0.05), (-1.0, 2.0), (0.5, 8.0), (2.0, 1.0)];
    let mut checked = 0;
    for (i, &(u0, v0)) in starts.iter().cycle().take(10).enumerate() {
        let (f, ph) = (0.5 + i as f64, 0.3 * i as f64);
        let control = move |t: f64, q: PlanePoint| (f * t + ph).sin() * fp.lambda_p * q.v;
        let z = PlanePoint::new(u0, v0);
        let path = synthesize_condition_i(&fp, z, &control, DEFAULT_FLOW_STEP, 5.0).unwrap();
        let ci = condition_i_check_path(&fp, &path, 20, Tolerance::Fixed { tol: 1e-6 }).unwrap();
        assert!(ci.fraction_ok == 1.0, "start {z:?}: {}", ci.fraction_ok);
        let g = graph_confinement_check(&fp, &path, z, 1e-6).unwrap();
        assert_eq!(g.violations, 0, "start {z:?}: max {}", g.max_violation);
        checked += g.checked;
    }
    assert!(checked > 0);
}

#[test]
fn rectangle_from_unit_point() {
    let fp = params(3, 1.0);
    let z = PlanePoint::new(1.0, 1.0);
    for k in 0..10 {
        let f = 1.0 + k as f64;
        let control = move |t: f64, q: PlanePoint| (f * t).cos() * fp.lambda_p * q.v;
        let path = synthesize_condition_i(&fp, z, &control, DEFAULT_FLOW_STEP, 2.0).unwrap();
        let r = rectangle_check(&fp, &path, z, 1e-8).unwrap();
        assert_eq!(r.violations, 0, "control {k}: {:?}", r.first_violation);
    }
}

#[test]
fn flows_bracket_controlled_path_pointwise_at_fixed_start() {
    let fp = params(3, 1.0);
    let z = PlanePoint::new(0.0, 3.0);
    let lo = integrate_flow(&fp, FlowKind::Lower, z, DEFAULT_FLOW_STEP, 1.0).unwrap();
    let hi = integrate_flow(&fp, FlowKind::Upper, z, DEFAULT_FLOW_STEP, 1.0).unwrap();
    let zero = synthesize_condition_i(&fp, z, &|_, _| 0.0, DEFAULT_FLOW_STEP, 1.0).unwrap();
    assert!(lo.last().u < zero.last().u && zero.last().u < hi.last().u);
}
