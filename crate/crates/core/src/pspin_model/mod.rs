//! The spherical p-spin Hamiltonian
//! `H(x) = N^{-(p-1)/2} sum J_{i1..ip} x_i1 ... x_ip` on the sphere of
//! radius `sqrt(N)`, its derivatives, and the observables `(u, v, w)`.
//!
//! Single-point evaluations contract the raw (non-symmetric) tensor slot by
//! slot. Batched evaluation for the Langevin integrator goes through
//! [`SymmetricKernel`], which packs the symmetrised tensor once and
//! contracts many replicas with one matrix product.

mod kernel;

pub use kernel::SymmetricKernel;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::linalg::{contract_slots, dot, matvec, norm_sq, project_tangent};
use crate::rng::{rng_for, DOMAIN_COUPLINGS};
use crate::{Error, Result};

/// Default cap on any single dense allocation made by this module.
pub const DEFAULT_MEMORY_BUDGET: u64 = 800_000_000;

pub const SUPPORTED_ORDERS: [usize; 3] = [2, 3, 4];

pub(crate) fn check_budget(what: impl Into<String>, bytes: u128, budget: u64) -> Result<()> {
    if bytes > budget as u128 {
        return Err(Error::Capacity { what: what.into(), bytes, budget });
    }
    Ok(())
}

/// Raw i.i.d. standard normal coupling tensor, row-major with `N^p` entries.
#[derive(Debug, Clone)]
pub struct CouplingTensor {
    p: usize,
    n: usize,
    seed: u64,
    budget: u64,
    entries: Vec<f64>,
}

impl CouplingTensor {
    pub fn sample(p: usize, n: usize, seed: u64) -> Result<Self> {
        Self::sample_with_budget(p, n, seed, DEFAULT_MEMORY_BUDGET)
    }

    pub fn sample_with_budget(p: usize, n: usize, seed: u64, budget: u64) -> Result<Self> {
        let len = Self::validate_shape(p, n, budget)?;
        let mut rng = rng_for(seed, DOMAIN_COUPLINGS, 0);
        let entries: Vec<f64> = (0..len).map(|_| rng.sample(StandardNormal)).collect();
        Ok(Self { p, n, seed, budget, entries })
    }

    /// Wraps explicit entries (oracle tests). The seed is recorded as 0.
    pub fn from_entries(p: usize, n: usize, entries: Vec<f64>) -> Result<Self> {
        let len = Self::validate_shape(p, n, DEFAULT_MEMORY_BUDGET)?;
        if entries.len() != len {
            return Err(Error::InvalidArgument(format!(
                "expected N^p = {len} entries, got {}",
                entries.len()
            )));
        }
        Ok(Self { p, n, seed: 0, budget: DEFAULT_MEMORY_BUDGET, entries })
    }

    fn validate_shape(p: usize, n: usize, budget: u64) -> Result<usize> {
        if !SUPPORTED_ORDERS.contains(&p) {
            return Err(Error::UnsupportedOrder { p, op: "dense coupling tensor" });
        }
        if n < 2 {
            return Err(Error::InvalidArgument(format!("N must be >= 2, got {n}")));
        }
        let count = (n as u128).pow(p as u32);
        check_budget(format!("N^p = {n}^{p} = {count} entries"), count * 8, budget)?;
        Ok(count as usize)
    }

    /// Draws the tensor again from the stored seed.
    pub fn regenerate(&self) -> Result<Self> {
        Self::sample_with_budget(self.p, self.n, self.seed, self.budget)
    }

    pub fn p(&self) -> usize {
        self.p
    }
    pub fn n(&self) -> usize {
        self.n
    }
    pub fn seed(&self) -> u64 {
        self.seed
    }
    pub fn budget(&self) -> u64 {
        self.budget
    }
    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    /// `N^{-(p-1)/2}`
    pub fn scale(&self) -> f64 {
        (self.n as f64).powf(-((self.p - 1) as f64) / 2.0)
    }

    /// FNV-1a over the shape, seed and a strided subsample of the entries.
    pub fn fingerprint(&self) -> String {
        const PRIME: u64 = 0x0000_0100_0000_01b3;
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut eat = |bytes: &[u8]| {
            for b in bytes {
                h ^= *b as u64;
                h = h.wrapping_mul(PRIME);
            }
        };
        eat(&(self.p as u64).to_le_bytes());
        eat(&(self.n as u64).to_le_bytes());
        eat(&self.seed.to_le_bytes());
        let stride = (self.entries.len() / 4096).max(1);
        for e in self.entries.iter().step_by(stride) {
            eat(&e.to_bits().to_le_bytes());
        }
        if let Some(last) = self.entries.last() {
            eat(&last.to_bits().to_le_bytes());
        }
        format!("fnv1a64:{h:016x}")
    }

    pub(crate) fn check_point(&self, x: &SpherePoint) {
        assert_eq!(x.n(), self.n, "point dimension does not match the model");
    }
}

/// Same as [`CouplingTensor::sample`].
pub fn sample_model(p: usize, n: usize, seed: u64) -> Result<CouplingTensor> {
    CouplingTensor::sample(p, n, seed)
}

/// A configuration on the sphere of radius `sqrt(N)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpherePoint {
    coords: Vec<f64>,
}

impl SpherePoint {
    pub const RADIUS_TOL: f64 = 1e-8;

    /// Accepts coordinates already on the sphere (relative tolerance 1e-8).
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        let n = coords.len() as f64;
        let r2 = norm_sq(&coords);
        if coords.len() < 2 || !r2.is_finite() || (r2 - n).abs() > Self::RADIUS_TOL * n {
            return Err(Error::Invariant(format!(
                "sum x^2 = {r2} is not N = {n} within relative 1e-8"
            )));
        }
        Ok(Self { coords })
    }

    /// Rescales a non-zero vector onto the sphere.
    pub fn from_direction(mut coords: Vec<f64>) -> Result<Self> {
        let r2 = norm_sq(&coords);
        if !(r2 > 0.0 && r2.is_finite()) {
            return Err(Error::InvalidArgument("cannot normalise a zero or non-finite vector".into()));
        }
        crate::linalg::renormalize(&mut coords);
        Ok(Self { coords })
    }

    pub(crate) fn from_normalized_unchecked(coords: Vec<f64>) -> Self {
        Self { coords }
    }

    pub fn n(&self) -> usize {
        self.coords.len()
    }
    pub fn coords(&self) -> &[f64] {
        &self.coords
    }
    pub fn into_coords(self) -> Vec<f64> {
        self.coords
    }

    pub fn negated(&self) -> Self {
        Self { coords: self.coords.iter().map(|c| -c).collect() }
    }
}

/// A vector tangent to the sphere at `base`.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentVector {
    base: SpherePoint,
    vec: Vec<f64>,
}

impl TangentVector {
    pub const TANGENCY_TOL: f64 = 1e-6;

    pub fn new(base: &SpherePoint, vec: Vec<f64>) -> Result<Self> {
        if vec.len() != base.n() {
            return Err(Error::InvalidArgument("tangent vector has the wrong dimension".into()));
        }
        let inner = dot(&vec, base.coords()).abs();
        let bound = Self::TANGENCY_TOL * norm_sq(&vec).sqrt() * (base.n() as f64).sqrt();
        if inner > bound {
            return Err(Error::Invariant(format!("<X, x> = {inner} exceeds tangency bound {bound}")));
        }
        Ok(Self { base: base.clone(), vec })
    }

    /// Projects an arbitrary vector onto the tangent space at `base`.
    pub fn project(base: &SpherePoint, mut vec: Vec<f64>) -> Self {
        assert_eq!(vec.len(), base.n());
        project_tangent(base.coords(), &mut vec);
        Self { base: base.clone(), vec }
    }

    pub fn base(&self) -> &SpherePoint {
        &self.base
    }
    pub fn vec(&self) -> &[f64] {
        &self.vec
    }
    pub fn into_vec(self) -> Vec<f64> {
        self.vec
    }
    pub fn norm(&self) -> f64 {
        norm_sq(&self.vec).sqrt()
    }
}

/// `(u, v, w) = (-H/N, |grad H|^2/N, G(grad H, grad H)/N)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObservableTriple {
    pub u: f64,
    pub v: f64,
    pub w: f64,
}

/// Energy, Euclidean gradient and Euclidean Hessian at one point.
#[derive(Debug, Clone)]
pub struct LocalJet {
    pub p: usize,
    pub energy: f64,
    pub egrad: Vec<f64>,
    /// Row-major `N x N`.
    pub hess: Vec<f64>,
}

impl LocalJet {
    /// Builds the jet from `M = S[x^{p-2}, ., .]`, where `S` is the
    /// symmetrised tensor and `scale = N^{-(p-1)/2}`.
    pub fn from_local_matrix(p: usize, scale: f64, x: &[f64], mut m: Vec<f64>) -> Self {
        let n = x.len();
        let mut mx = vec![0.0; n];
        matvec(&m, x, &mut mx);
        let energy = scale * dot(x, &mx);
        let pf = p as f64;
        let egrad: Vec<f64> = mx.iter().map(|v| pf * scale * v).collect();
        let hf = pf * (pf - 1.0) * scale;
        for v in m.iter_mut() {
            *v *= hf;
        }
        Self { p, energy, egrad, hess: m }
    }

    pub fn n(&self) -> usize {
        self.egrad.len()
    }

    /// `P_x grad H`
    pub fn spherical_gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut g = self.egrad.clone();
        project_tangent(x, &mut g);
        g
    }

    pub fn trace_hess(&self) -> f64 {
        let n = self.n();
        (0..n).map(|i| self.hess[i * n + i]).sum()
    }

    /// `tr G = tr Hess - x^T Hess x / N = tr Hess - p(p-1) H / N`
    pub fn trace_g(&self) -> f64 {
        let pf = self.p as f64;
        self.trace_hess() - pf * (pf - 1.0) * self.energy / self.n() as f64
    }

    /// `tr G^2 = |Hess|_F^2 - 2 |Hess x|^2 / N + (x^T Hess x)^2 / N^2`
    pub fn trace_g2(&self, x: &[f64]) -> f64 {
        let n = self.n();
        let nf = n as f64;
        let mut hx = vec![0.0; n];
        matvec(&self.hess, x, &mut hx);
        let xhx = dot(x, &hx);
        norm_sq(&self.hess) - 2.0 * norm_sq(&hx) / nf + xhx * xhx / (nf * nf)
    }

    /// `X^T Hess Y`
    pub fn quadratic_form(&self, a: &[f64], b: &[f64]) -> f64 {
        let mut hb = vec![0.0; self.n()];
        matvec(&self.hess, b, &mut hb);
        dot(a, &hb)
    }

    pub fn observables(&self, x: &[f64]) -> ObservableTriple {
        let nf = self.n() as f64;
        let g = self.spherical_gradient(x);
        ObservableTriple {
            u: -self.energy / nf,
            v: norm_sq(&g) / nf,
            w: self.quadratic_form(&g, &g) / nf,
        }
    }

    /// `Delta H = -p (1 - 1/N) H + tr G`
    pub fn laplacian(&self) -> f64 {
        let nf = self.n() as f64;
        -(self.p as f64) * (1.0 - 1.0 / nf) * self.energy + self.trace_g()
    }

    /// `(Delta H + p H) / N`
    pub fn drift_residual(&self) -> f64 {
        (self.laplacian() + self.p as f64 * self.energy) / self.n() as f64
    }
}

/// `H(x)` by sequential mode contractions of the raw tensor.
pub fn energy(model: &CouplingTensor, x: &SpherePoint) -> f64 {
    model.check_point(x);
    let vecs: Vec<Option<&[f64]>> = vec![Some(x.coords()); model.p];
    model.scale() * contract_slots(&model.entries, model.p, model.n, &vecs)[0]
}

/// Componentwise derivative of `H` in the ambient space: the sum of the
/// `p` single-slot contractions.
pub fn euclidean_gradient(model: &CouplingTensor, x: &SpherePoint) -> Vec<f64> {
    model.check_point(x);
    let (p, n) = (model.p, model.n);
    let mut g = vec![0.0; n];
    for s in 0..p {
        let vecs: Vec<Option<&[f64]>> =
            (0..p).map(|t| if t == s { None } else { Some(x.coords()) }).collect();
        let part = contract_slots(&model.entries, p, n, &vecs);
        crate::linalg::axpy(1.0, &part, &mut g);
    }
    let c = model.scale();
    g.iter_mut().for_each(|v| *v *= c);
    g
}

pub fn spherical_gradient(model: &CouplingTensor, x: &SpherePoint) -> TangentVector {
    TangentVector::project(x, euclidean_gradient(model, x))
}

/// `G(X, Y) = X^T Hess H(x) Y` summed over ordered slot pairs.
pub fn hessian_quadratic_form(
    model: &CouplingTensor,
    x: &SpherePoint,
    a: &TangentVector,
    b: &TangentVector,
) -> Result<f64> {
    model.check_point(x);
    for t in [a, b] {
        if t.base() != x {
            TangentVector::new(x, t.vec().to_vec())?;
        }
    }
    let (p, n) = (model.p, model.n);
    let mut total = 0.0;
    for s in 0..p {
        for t in 0..p {
            if s == t {
                continue;
            }
            let vecs: Vec<Option<&[f64]>> = (0..p)
                .map(|k| {
                    Some(if k == s {
                        a.vec()
                    } else if k == t {
                        b.vec()
                    } else {
                        x.coords()
                    })
                })
                .collect();
            total += contract_slots(&model.entries, p, n, &vecs)[0];
        }
    }
    Ok(model.scale() * total)
}

/// Dense Euclidean Hessian `N x N`, gated by the model's memory budget.
pub fn hessian_matrix(model: &CouplingTensor, x: &SpherePoint) -> Result<Vec<f64>> {
    model.check_point(x);
    let (p, n) = (model.p, model.n);
    check_budget(format!("dense Hessian {n} x {n}"), (n as u128).pow(2) * 8, model.budget)?;
    let mut h = vec![0.0; n * n];
    for s in 0..p {
        for t in (s + 1)..p {
            let vecs: Vec<Option<&[f64]>> =
                (0..p).map(|k| if k == s || k == t { None } else { Some(x.coords()) }).collect();
            let a = contract_slots(&model.entries, p, n, &vecs);
            for i in 0..n {
                for j in 0..n {
                    h[i * n + j] += a[i * n + j] + a[j * n + i];
                }
            }
        }
    }
    let c = model.scale();
    h.iter_mut().for_each(|v| *v *= c);
    Ok(h)
}

/// Energy, gradient and Hessian through the raw-tensor route.
pub fn local_jet(model: &CouplingTensor, x: &SpherePoint) -> Result<LocalJet> {
    let hess = hessian_matrix(model, x)?;
    Ok(LocalJet {
        p: model.p,
        energy: energy(model, x),
        egrad: euclidean_gradient(model, x),
        hess,
    })
}

/// Projected Hessian `P Hess P` as a dense matrix.
pub fn projected_hessian(model: &CouplingTensor, x: &SpherePoint) -> Result<Vec<f64>> {
    let h = hessian_matrix(model, x)?;
    Ok(project_matrix(&h, x.coords()))
}

pub(crate) fn project_matrix(h: &[f64], x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let nf = n as f64;
    let mut hx = vec![0.0; n];
    matvec(h, x, &mut hx);
    let xhx = dot(x, &hx);
    let mut g = h.to_vec();
    for i in 0..n {
        for j in 0..n {
            g[i * n + j] += -(x[i] * hx[j] + hx[i] * x[j]) / nf + xhx * x[i] * x[j] / (nf * nf);
        }
    }
    g
}

pub fn trace_g(model: &CouplingTensor, x: &SpherePoint) -> Result<f64> {
    Ok(local_jet(model, x)?.trace_g())
}

pub fn trace_g2(model: &CouplingTensor, x: &SpherePoint) -> Result<f64> {
    Ok(local_jet(model, x)?.trace_g2(x.coords()))
}

pub fn observables(model: &CouplingTensor, x: &SpherePoint) -> ObservableTriple {
    let g = spherical_gradient(model, x);
    let nf = model.n as f64;
    let w = hessian_quadratic_form(model, x, &g, &g).expect("gradient is tangent by construction");
    ObservableTriple { u: -energy(model, x) / nf, v: norm_sq(g.vec()) / nf, w: w / nf }
}

/// Tangential gradient of `x -> tr G(x)` for a cubic model.
///
/// `tr G = tr Hess(x) - 6 H(x) / N`; `tr Hess` is linear in `x` with the
/// constant gradient `2c sum_i (J_kii + J_iki + J_iik)`.
pub fn grad_trace_g(model: &CouplingTensor, x: &SpherePoint) -> Result<TangentVector> {
    if model.p != 3 {
        return Err(Error::UnsupportedOrder { p: model.p, op: "grad_trace_g" });
    }
    if model.n > 300 {
        return Err(Error::InvalidArgument(format!("grad_trace_g supports N <= 300, got {}", model.n)));
    }
    let n = model.n;
    let j = &model.entries;
    let c = model.scale();
    let nf = n as f64;
    let eg = euclidean_gradient(model, x);
    let mut out = vec![0.0; n];
    for (k, o) in out.iter_mut().enumerate() {
        let mut s = 0.0;
        for i in 0..n {
            s += j[k * n * n + i * n + i] + j[i * n * n + k * n + i] + j[i * n * n + i * n + k];
        }
        *o = 2.0 * c * s - 6.0 * eg[k] / nf;
    }
    Ok(TangentVector::project(x, out))
}

/// Uniform point from a standard Gaussian direction.
pub fn random_point<R: Rng + ?Sized>(n: usize, rng: &mut R) -> SpherePoint {
    loop {
        let v: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        if let Ok(p) = SpherePoint::from_direction(v) {
            return p;
        }
    }
}

/// Uniform unit-scale tangent direction at `x` (Gaussian, projected).
pub fn random_tangent<R: Rng + ?Sized>(x: &SpherePoint, rng: &mut R) -> TangentVector {
    let v: Vec<f64> = (0..x.n()).map(|_| rng.sample(StandardNormal)).collect();
    TangentVector::project(x, v)
}

#[cfg(test)]
mod tests;
