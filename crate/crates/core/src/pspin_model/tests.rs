use super::*;
use crate::rng::rng_for;

fn identity_p2() -> CouplingTensor {
    CouplingTensor::from_entries(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap()
}

fn point(n: usize, seed: u64) -> SpherePoint {
    random_point(n, &mut rng_for(seed, 99, 0))
}

fn geodesic(x: &SpherePoint, t: &[f64], s: f64) -> SpherePoint {
    let nf = x.n() as f64;
    let tn = norm_sq(t).sqrt();
    let a = s * tn / nf.sqrt();
    let c: Vec<f64> = x
        .coords()
        .iter()
        .zip(t)
        .map(|(xi, ti)| xi * a.cos() + nf.sqrt() * ti / tn * a.sin())
        .collect();
    SpherePoint::from_direction(c).unwrap()
}

#[test]
fn sampling_is_deterministic() {
    let a = CouplingTensor::sample(2, 2, 5).unwrap();
    let b = CouplingTensor::sample(2, 2, 5).unwrap();
    assert_eq!(a.entries().len(), 4);
    assert_eq!(a.entries(), b.entries());
    assert_eq!(a.regenerate().unwrap().entries(), a.entries());
    assert_eq!(a.fingerprint(), b.fingerprint());
    assert_ne!(CouplingTensor::sample(2, 2, 6).unwrap().entries(), a.entries());
}

#[test]
fn capacity_error_names_size() {
    let err = CouplingTensor::sample(3, 10_000, 1).unwrap_err();
    match err {
        Error::Capacity { what, .. } => assert!(what.contains("10000^3")),
        e => panic!("unexpected {e:?}"),
    }
}

#[test]
fn unsupported_order_rejected() {
    assert!(matches!(CouplingTensor::sample(5, 3, 1), Err(Error::UnsupportedOrder { .. })));
}

#[test]
fn entry_moments() {
    let m = CouplingTensor::sample(3, 100, 17).unwrap();
    let e = m.entries();
    let len = e.len() as f64;
    let mean = e.iter().sum::<f64>() / len;
    let var = e.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (len - 1.0);
    assert!((0.99..=1.01).contains(&var), "variance {var}");
    assert!(mean.abs() <= 5.0 / len.sqrt(), "mean {mean}");
}

#[test]
fn identity_quadratic_oracles() {
    let m = identity_p2();
    let x = SpherePoint::new(vec![1.2, (2.0f64 - 1.44).sqrt()]).unwrap();
    assert!((energy(&m, &x) - 2f64.sqrt()).abs() < 1e-14);
    let g = euclidean_gradient(&m, &x);
    for (gi, xi) in g.iter().zip(x.coords()) {
        assert!((gi - 2f64.sqrt() * xi).abs() < 1e-14);
    }
    assert!(spherical_gradient(&m, &x).norm() < 1e-14);
}

#[test]
fn p2_hessian_form_matches_matrix() {
    let m = CouplingTensor::sample(2, 6, 3).unwrap();
    let x = point(6, 1);
    let mut r = rng_for(2, 2, 2);
    let a = random_tangent(&x, &mut r);
    let b = random_tangent(&x, &mut r);
    let j = m.entries();
    let mut direct = 0.0;
    for i in 0..6 {
        for k in 0..6 {
            direct += a.vec()[i] * (j[i * 6 + k] + j[k * 6 + i]) * b.vec()[k];
        }
    }
    direct /= 6f64.sqrt();
    let g = hessian_quadratic_form(&m, &x, &a, &b).unwrap();
    assert!((g - direct).abs() < 1e-12 * direct.abs().max(1.0));
}

#[test]
fn euler_identity_all_orders() {
    for (p, n) in [(2, 30), (3, 20), (4, 10)] {
        let m = CouplingTensor::sample(p, n, 40 + p as u64).unwrap();
        for s in 0..20 {
            let x = point(n, s);
            let h = energy(&m, &x);
            let g = euclidean_gradient(&m, &x);
            let lhs = dot(x.coords(), &g);
            assert!((lhs - p as f64 * h).abs() <= 1e-10 * (p as f64 * h).abs().max(1e-3));
        }
    }
}

#[test]
fn parity() {
    for p in [2, 3, 4] {
        let m = CouplingTensor::sample(p, 8, 9).unwrap();
        let x = point(8, 4);
        let sign = if p % 2 == 0 { 1.0 } else { -1.0 };
        assert!((energy(&m, &x.negated()) - sign * energy(&m, &x)).abs() < 1e-12);
    }
}

#[test]
fn gradient_finite_differences() {
    let m = CouplingTensor::sample(3, 15, 8).unwrap();
    let x = point(15, 2);
    let g = euclidean_gradient(&m, &x);
    let h = 1e-5;
    for i in 0..15 {
        let mut xp = x.coords().to_vec();
        let mut xm = x.coords().to_vec();
        xp[i] += h;
        xm[i] -= h;
        let e = |c: Vec<f64>| {
            let vecs: Vec<Option<&[f64]>> = vec![Some(&c); 3];
            m.scale() * contract_slots(m.entries(), 3, 15, &vecs)[0]
        };
        let fd = (e(xp) - e(xm)) / (2.0 * h);
        assert!((fd - g[i]).abs() <= 1e-6 * g[i].abs().max(1.0));
    }
}

#[test]
fn hessian_form_symmetric_and_geodesic() {
    let m = CouplingTensor::sample(3, 12, 21).unwrap();
    let x = point(12, 6);
    let mut r = rng_for(6, 6, 6);
    let a = random_tangent(&x, &mut r);
    let b = random_tangent(&x, &mut r);
    let gab = hessian_quadratic_form(&m, &x, &a, &b).unwrap();
    let gba = hessian_quadratic_form(&m, &x, &b, &a).unwrap();
    assert!((gab - gba).abs() <= 1e-10 * gab.abs().max(1e-3));

    let gaa = hessian_quadratic_form(&m, &x, &a, &a).unwrap();
    let s = 1e-4;
    let h0 = energy(&m, &x);
    let d2 = (energy(&m, &geodesic(&x, a.vec(), s)) - 2.0 * h0
        + energy(&m, &geodesic(&x, a.vec(), -s)))
        / (s * s);
    let corrected = d2 + 3.0 * h0 * norm_sq(a.vec()) / 12.0;
    assert!((corrected - gaa).abs() <= 1e-4 * gaa.abs().max(1.0), "{corrected} vs {gaa}");
}

#[test]
fn non_tangent_input_rejected() {
    let m = CouplingTensor::sample(3, 6, 1).unwrap();
    let x = point(6, 1);
    let other = point(6, 2);
    let bad = TangentVector::project(&other, vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
    assert!(hessian_quadratic_form(&m, &x, &bad, &bad).is_err());
}

#[test]
fn kernel_matches_raw_route() {
    for (p, n) in [(2, 9), (3, 11), (4, 7)] {
        let m = CouplingTensor::sample(p, n, 70 + p as u64).unwrap();
        let k = SymmetricKernel::new(&m).unwrap();
        let pts: Vec<SpherePoint> = (0..3).map(|s| point(n, 100 + s)).collect();
        let xs: Vec<f64> = pts.iter().flat_map(|x| x.coords().to_vec()).collect();
        let jets = k.jets(&xs);
        for (x, jet) in pts.iter().zip(&jets) {
            let raw = local_jet(&m, x).unwrap();
            assert!((jet.energy - raw.energy).abs() < 1e-12 * raw.energy.abs().max(1.0));
            for (a, b) in jet.egrad.iter().zip(&raw.egrad) {
                assert!((a - b).abs() < 1e-12 * b.abs().max(1.0));
            }
            for (a, b) in jet.hess.iter().zip(&raw.hess) {
                assert!((a - b).abs() < 1e-12 * b.abs().max(1.0));
            }
        }
    }
}

#[test]
fn jet_observables_match_raw_ops() {
    let m = CouplingTensor::sample(3, 10, 5).unwrap();
    let x = point(10, 3);
    let o = observables(&m, &x);
    let j = local_jet(&m, &x).unwrap().observables(x.coords());
    assert!((o.u - j.u).abs() < 1e-12 && (o.v - j.v).abs() < 1e-12 && (o.w - j.w).abs() < 1e-12);
}

#[test]
fn trace_g_matches_projected_matrix() {
    let m = CouplingTensor::sample(3, 10, 12).unwrap();
    let x = point(10, 9);
    let g = projected_hessian(&m, &x).unwrap();
    let tr: f64 = (0..10).map(|i| g[i * 10 + i]).sum();
    let tr2: f64 = g.iter().map(|v| v * v).sum();
    assert!((trace_g(&m, &x).unwrap() - tr).abs() < 1e-12);
    assert!((trace_g2(&m, &x).unwrap() - tr2).abs() < 1e-10);
}

#[test]
fn grad_trace_g_oracles() {
    let m = CouplingTensor::sample(3, 16, 33).unwrap();
    let x = point(16, 8);
    let gt = grad_trace_g(&m, &x).unwrap();
    assert!(dot(gt.vec(), x.coords()).abs() <= 1e-8 * gt.norm() * 4.0);
    let mut r = rng_for(1, 1, 1);
    for _ in 0..10 {
        let t = random_tangent(&x, &mut r);
        let s = 1e-4;
        let fd = (trace_g(&m, &geodesic(&x, t.vec(), s)).unwrap()
            - trace_g(&m, &geodesic(&x, t.vec(), -s)).unwrap())
            / (2.0 * s);
        let exact = dot(gt.vec(), t.vec());
        assert!((fd - exact).abs() <= 1e-4 * exact.abs().max(1e-2), "{fd} vs {exact}");
    }
    let m4 = CouplingTensor::sample(4, 4, 1).unwrap();
    assert!(matches!(grad_trace_g(&m4, &point(4, 1)), Err(Error::UnsupportedOrder { .. })));
}

#[test]
fn evaluations_are_pure() {
    let m = CouplingTensor::sample(3, 10, 2).unwrap();
    let x = point(10, 2);
    assert_eq!(energy(&m, &x).to_bits(), energy(&m, &x).to_bits());
    let a = observables(&m, &x);
    let b = observables(&m, &x);
    assert_eq!(a.w.to_bits(), b.w.to_bits());
}
