//! Small dense kernels shared by the model and the diagnostics.

/// Dot product with four independent accumulators.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut tail = 0.0;
    for (x, y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

pub fn norm_sq(a: &[f64]) -> f64 {
    dot(a, a)
}

/// `y += alpha * x`
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Removes the component of `v` along `x`, where `|x|^2 = n`.
pub fn project_tangent(x: &[f64], v: &mut [f64]) {
    let n = x.len() as f64;
    let c = dot(x, v) / n;
    axpy(-c, x, v);
}

/// Rescales `x` to radius `sqrt(len)`; returns the pre-scaling relative
/// deviation `|sum x^2 - N| / N`.
pub fn renormalize(x: &mut [f64]) -> f64 {
    let n = x.len() as f64;
    let r2 = norm_sq(x);
    let s = (n / r2).sqrt();
    for xi in x.iter_mut() {
        *xi *= s;
    }
    (r2 - n).abs() / n
}

/// Row-major square matrix times vector.
pub fn matvec(a: &[f64], x: &[f64], out: &mut [f64]) {
    let n = x.len();
    debug_assert_eq!(a.len(), out.len() * n);
    for (o, row) in out.iter_mut().zip(a.chunks_exact(n)) {
        *o = dot(row, x);
    }
}

/// `C (m x n, row-major) = A (m x k) * B (k x n)` with explicit strides for
/// `A` and `B`.
#[allow(clippy::too_many_arguments)]
pub fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_rs: usize,
    a_cs: usize,
    b: &[f64],
    b_rs: usize,
    b_cs: usize,
    c: &mut [f64],
) {
    assert!(m == 0 || k == 0 || (m - 1) * a_rs + (k - 1) * a_cs < a.len());
    assert!(k == 0 || n == 0 || (k - 1) * b_rs + (n - 1) * b_cs < b.len());
    assert_eq!(c.len(), m * n);
    // SAFETY: the asserts above bound every index the kernel touches.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            a_rs as isize,
            a_cs as isize,
            b.as_ptr(),
            b_rs as isize,
            b_cs as isize,
            0.0,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Contracts the middle axis of a tensor viewed as `(outer, n, inner)` with
/// `v`, returning the `(outer, inner)` result.
pub fn contract_axis(t: &[f64], outer: usize, n: usize, inner: usize, v: &[f64]) -> Vec<f64> {
    debug_assert_eq!(t.len(), outer * n * inner);
    let mut out = vec![0.0; outer * inner];
    if inner == 1 {
        for (o, row) in out.iter_mut().zip(t.chunks_exact(n)) {
            *o = dot(row, v);
        }
    } else {
        for (dst, block) in out.chunks_exact_mut(inner).zip(t.chunks_exact(n * inner)) {
            for (vi, src) in v.iter().zip(block.chunks_exact(inner)) {
                axpy(*vi, src, dst);
            }
        }
    }
    out
}

/// Contracts an order-`order` cubical tensor of side `n` with one vector
/// per slot; `None` leaves the slot free. Free slots keep their relative
/// order in the row-major result.
pub fn contract_slots(data: &[f64], order: usize, n: usize, vecs: &[Option<&[f64]>]) -> Vec<f64> {
    assert_eq!(vecs.len(), order);
    let mut cur: Option<Vec<f64>> = None;
    let mut free_after = 0u32;
    for slot in (0..order).rev() {
        match vecs[slot] {
            Some(v) => {
                let inner = n.pow(free_after);
                let outer = n.pow(slot as u32);
                let src: &[f64] = cur.as_deref().unwrap_or(data);
                cur = Some(contract_axis(src, outer, n, inner, v));
            }
            None => free_after += 1,
        }
    }
    cur.unwrap_or_else(|| data.to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn contract_slots_matches_naive_order3() {
        let n = 3;
        let t: Vec<f64> = (0..27).map(|i| (i as f64 * 0.37).sin()).collect();
        let a = [0.3, -1.0, 2.0];
        let b = [1.5, 0.2, -0.7];
        let r = contract_slots(&t, 3, n, &[Some(&a), None, Some(&b)]);
        for j in 0..n {
            let mut s = 0.0;
            for i in 0..n {
                for k in 0..n {
                    s += t[i * 9 + j * 3 + k] * a[i] * b[k];
                }
            }
            assert!((r[j] - s).abs() < 1e-12);
        }
    }

    #[test]
    fn gemm_matches_naive() {
        let (m, k, n) = (5, 4, 3);
        let a: Vec<f64> = (0..m * k).map(|i| i as f64 * 0.5 - 3.0).collect();
        let b: Vec<f64> = (0..k * n).map(|i| (i as f64).cos()).collect();
        let mut c = vec![0.0; m * n];
        gemm(m, k, n, &a, k, 1, &b, n, 1, &mut c);
        for i in 0..m {
            for j in 0..n {
                let s: f64 = (0..k).map(|l| a[i * k + l] * b[l * n + j]).sum();
                assert!((c[i * n + j] - s).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn renormalize_hits_radius() {
        let mut x = vec![1.0, 2.0, 3.0, 4.0];
        renormalize(&mut x);
        assert!((norm_sq(&x) - 4.0).abs() < 1e-12);
    }
}
