//! Langevin dynamics `dX = sqrt(2) dB - beta grad H dt` on the sphere of
//! radius `sqrt(N)`.
//!
//! Euler-Maruyama in the embedding space: tangential Gaussian increment,
//! tangential drift, then rescaling back to the sphere. The rescaling
//! supplies the radial Ito correction of the embedded Brownian motion.

use std::fs;
use std::io::Write;
use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::linalg::{axpy, dot, matvec, norm_sq, project_tangent, renormalize};
use crate::pspin_model::{
    euclidean_gradient, random_point, CouplingTensor, LocalJet, ObservableTriple, SpherePoint,
    SymmetricKernel,
};
use crate::rng::replica_stream;
use crate::{Error, Result};

pub const DEFAULT_STEP: f64 = 1e-3;
pub const MAX_STEP: f64 = 1e-2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LangevinConfig {
    pub beta: f64,
    pub step: f64,
    pub horizon: f64,
    pub record_stride: usize,
    pub seed: u64,
}

impl LangevinConfig {
    pub fn new(beta: f64, step: f64, horizon: f64, record_stride: usize, seed: u64) -> Result<Self> {
        let c = Self { beta, step, horizon, record_stride, seed };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return bad(format!("beta must be >= 0, got {}", self.beta));
        }
        if !(self.step > 0.0 && self.step <= MAX_STEP) {
            return bad(format!("step must lie in (0, {MAX_STEP}], got {}", self.step));
        }
        if !(self.horizon >= self.step && self.horizon.is_finite()) {
            return bad(format!("horizon {} is shorter than the step", self.horizon));
        }
        if self.record_stride == 0 {
            return bad("record_stride must be >= 1".into());
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        (self.horizon / self.step).round() as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordSidecar {
    pub p: usize,
    pub n: usize,
    pub seed: u64,
    pub stream: u64,
    pub config: LangevinConfig,
    pub model_fingerprint: String,
    pub samples: usize,
    pub max_renorm_drift: f64,
}

/// Observable time series of one Langevin run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub times: Vec<f64>,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub w: Vec<f64>,
    /// `(Delta H + p H) / N` at the record times.
    pub residual_g1: Vec<f64>,
    pub seed: u64,
    pub stream: u64,
    pub config: LangevinConfig,
    pub model_fingerprint: String,
    pub p: usize,
    pub n: usize,
    /// Largest `|sum x^2 - N| / N` seen before a renormalisation.
    pub max_renorm_drift: f64,
}

pub(crate) fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

impl TrajectoryRecord {
    fn empty(model: &CouplingTensor, config: &LangevinConfig, stream: u64) -> Self {
        Self {
            times: Vec::new(),
            u: Vec::new(),
            v: Vec::new(),
            w: Vec::new(),
            residual_g1: Vec::new(),
            seed: config.seed,
            stream,
            config: config.clone(),
            model_fingerprint: model.fingerprint(),
            p: model.p(),
            n: model.n(),
            max_renorm_drift: 0.0,
        }
    }

    fn push(&mut self, t: f64, o: ObservableTriple, g1: f64) {
        self.times.push(t);
        self.u.push(o.u);
        self.v.push(o.v);
        self.w.push(o.w);
        self.residual_g1.push(g1);
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn observable(&self, i: usize) -> ObservableTriple {
        ObservableTriple { u: self.u[i], v: self.v[i], w: self.w[i] }
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("t,u,v,w,g1\n");
        for i in 0..self.len() {
            s.push_str(&format!(
                "{},{},{},{},{}\n",
                fmt17(self.times[i]),
                fmt17(self.u[i]),
                fmt17(self.v[i]),
                fmt17(self.w[i]),
                fmt17(self.residual_g1[i])
            ));
        }
        s
    }

    pub fn sidecar(&self) -> RecordSidecar {
        RecordSidecar {
            p: self.p,
            n: self.n,
            seed: self.seed,
            stream: self.stream,
            config: self.config.clone(),
            model_fingerprint: self.model_fingerprint.clone(),
            samples: self.len(),
            max_renorm_drift: self.max_renorm_drift,
        }
    }

    /// Writes `<stem>.csv` and `<stem>.json` into `dir`.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::File::create(dir.join(format!("{stem}.csv")))?.write_all(self.to_csv().as_bytes())?;
        let side = serde_json::to_string_pretty(&self.sidecar())?;
        fs::write(dir.join(format!("{stem}.json")), side)?;
        Ok(())
    }

    /// Parses the CSV body written by [`Self::to_csv`]; metadata fields are
    /// left at placeholder values.
    pub fn from_csv(text: &str, config: LangevinConfig) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next() != Some("t,u,v,w,g1") {
            return Err(Error::InvalidArgument("missing header t,u,v,w,g1".into()));
        }
        let mut rec = Self {
            times: Vec::new(),
            u: Vec::new(),
            v: Vec::new(),
            w: Vec::new(),
            residual_g1: Vec::new(),
            seed: config.seed,
            stream: 0,
            config,
            model_fingerprint: String::new(),
            p: 0,
            n: 0,
            max_renorm_drift: 0.0,
        };
        for (k, line) in lines.enumerate() {
            let vals: std::result::Result<Vec<f64>, _> = line.split(',').map(str::parse).collect();
            let vals = vals.map_err(|e| Error::InvalidArgument(format!("row {k}: {e}")))?;
            if vals.len() != 5 {
                return Err(Error::InvalidArgument(format!("row {k}: expected 5 columns")));
            }
            rec.push(vals[0], ObservableTriple { u: vals[1], v: vals[2], w: vals[3] }, vals[4]);
        }
        Ok(rec)
    }

    /// Pointwise mean of `(u, v, w, g1)` over records sharing one time grid.
    pub fn mean_of(records: &[&TrajectoryRecord]) -> Result<TrajectoryRecord> {
        let first = records
            .first()
            .ok_or_else(|| Error::InvalidArgument("mean of zero records".into()))?;
        let len = records.iter().map(|r| r.len()).min().unwrap_or(0);
        let mut out = (*first).clone();
        let k = records.len() as f64;
        let avg = |f: &dyn Fn(&TrajectoryRecord) -> &Vec<f64>| -> Vec<f64> {
            (0..len).map(|i| records.iter().map(|r| f(r)[i]).sum::<f64>() / k).collect()
        };
        out.u = avg(&|r| &r.u);
        out.v = avg(&|r| &r.v);
        out.w = avg(&|r| &r.w);
        out.residual_g1 = avg(&|r| &r.residual_g1);
        out.times.truncate(len);
        Ok(out)
    }
}

/// Source of the standard normal vectors `xi` driving each replica.
pub trait NoiseSource {
    fn fill(&mut self, replica: usize, step: usize, xi: &mut [f64]);
}

/// Independent ChaCha streams: replica `i` draws from stream `streams[i]`.
pub struct StreamNoise {
    rngs: Vec<ChaCha8Rng>,
}

impl StreamNoise {
    pub fn new(root: u64, streams: &[u64]) -> Self {
        Self { rngs: streams.iter().map(|&s| replica_stream(root, s)).collect() }
    }
}

impl NoiseSource for StreamNoise {
    fn fill(&mut self, replica: usize, _step: usize, xi: &mut [f64]) {
        let rng = &mut self.rngs[replica];
        for v in xi.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
    }
}

/// Noise switched off: the step becomes projected gradient descent.
pub struct NoNoise;

impl NoiseSource for NoNoise {
    fn fill(&mut self, _replica: usize, _step: usize, xi: &mut [f64]) {
        xi.iter_mut().for_each(|v| *v = 0.0);
    }
}

/// `P_x xi sqrt(h)` with `xi` standard normal.
pub fn brownian_increment<R: Rng + ?Sized>(x: &SpherePoint, h: f64, rng: &mut R) -> Vec<f64> {
    let mut xi: Vec<f64> = (0..x.n()).map(|_| rng.sample::<f64, _>(StandardNormal) * h.sqrt()).collect();
    project_tangent(x.coords(), &mut xi);
    xi
}

/// In-place update `x <- renorm(x + P(sqrt(2h) xi - beta h grad))`.
/// Returns the pre-renormalisation radial drift.
fn advance(x: &mut [f64], egrad: &[f64], beta: f64, h: f64, xi: &mut [f64]) -> f64 {
    let s = (2.0 * h).sqrt();
    for (d, g) in xi.iter_mut().zip(egrad) {
        *d = s * *d - beta * h * g;
    }
    project_tangent(x, xi);
    axpy(1.0, xi, x);
    renormalize(x)
}

/// One Euler-Maruyama step through the raw-tensor gradient.
pub fn langevin_step<R: Rng + ?Sized>(
    model: &CouplingTensor,
    x: &SpherePoint,
    config: &LangevinConfig,
    rng: &mut R,
) -> Result<SpherePoint> {
    let g = euclidean_gradient(model, x);
    let mut xi: Vec<f64> = (0..x.n()).map(|_| rng.sample(StandardNormal)).collect();
    let mut c = x.coords().to_vec();
    advance(&mut c, &g, config.beta, config.step, &mut xi);
    if c.iter().any(|v| !v.is_finite()) {
        return Err(Error::SimulationDiverged { step: 0 });
    }
    Ok(SpherePoint::from_normalized_unchecked(c))
}

/// Batched integrator sharing one packed tensor across replicas.
pub struct LangevinEngine<'a> {
    model: &'a CouplingTensor,
    kernel: SymmetricKernel,
}

impl<'a> LangevinEngine<'a> {
    pub fn new(model: &'a CouplingTensor) -> Result<Self> {
        Ok(Self { model, kernel: SymmetricKernel::new(model)? })
    }

    pub fn model(&self) -> &CouplingTensor {
        self.model
    }

    pub fn kernel(&self) -> &SymmetricKernel {
        &self.kernel
    }

    /// Runs with noise stream 0 of `config.seed`.
    pub fn simulate(&self, x0: &SpherePoint, config: &LangevinConfig) -> Result<TrajectoryRecord> {
        let mut noise = StreamNoise::new(config.seed, &[0]);
        self.run(std::slice::from_ref(x0), config, &[0], &mut noise).pop().expect("one replica")
    }

    /// Replica `i` starts at `starts[i]` and uses noise stream `i`.
    pub fn simulate_replicas(
        &self,
        starts: &[SpherePoint],
        config: &LangevinConfig,
    ) -> Vec<Result<TrajectoryRecord>> {
        let streams: Vec<u64> = (0..starts.len() as u64).collect();
        let mut noise = StreamNoise::new(config.seed, &streams);
        self.run(starts, config, &streams, &mut noise)
    }

    /// General batched run with caller-provided noise.
    pub fn run(
        &self,
        starts: &[SpherePoint],
        config: &LangevinConfig,
        streams: &[u64],
        noise: &mut dyn NoiseSource,
    ) -> Vec<Result<TrajectoryRecord>> {
        if let Err(e) = config.validate() {
            let msg = e.to_string();
            return starts.iter().map(|_| Err(Error::InvalidArgument(msg.clone()))).collect();
        }
        let n = self.model.n();
        let p = self.model.p();
        let scale = self.model.scale();
        let r = starts.len();
        let mut xs: Vec<f64> = starts
            .iter()
            .flat_map(|s| {
                assert_eq!(s.n(), n, "start dimension does not match the model");
                s.coords().to_vec()
            })
            .collect();
        let mut recs: Vec<TrajectoryRecord> =
            streams.iter().map(|&s| TrajectoryRecord::empty(self.model, config, s)).collect();
        let mut failed: Vec<Option<Error>> = (0..r).map(|_| None).collect();
        let steps = config.steps();
        let mut work = Vec::new();
        let mut m = Vec::new();
        let mut mx = vec![0.0; n];
        let mut xi = vec![0.0; n];
        let pc = p as f64 * scale;
        for k in 0..=steps {
            let record = k % config.record_stride == 0;
            if k == steps && !record {
                break;
            }
            self.kernel.contract_last(&xs, &mut work);
            for i in 0..r {
                if failed[i].is_some() {
                    continue;
                }
                let x = &mut xs[i * n..(i + 1) * n];
                self.kernel.local_matrix(&work, i, x, &mut m);
                let egrad: Vec<f64> = if record {
                    let jet = LocalJet::from_local_matrix(p, scale, x, m.clone());
                    recs[i].push(k as f64 * config.step, jet.observables(x), jet.drift_residual());
                    jet.egrad
                } else {
                    matvec(&m, x, &mut mx);
                    mx.iter().map(|v| pc * v).collect()
                };
                if k == steps {
                    continue;
                }
                noise.fill(i, k, &mut xi);
                let drift = advance(x, &egrad, config.beta, config.step, &mut xi);
                if !drift.is_finite() || x.iter().any(|v| !v.is_finite()) {
                    failed[i] = Some(Error::SimulationDiverged { step: k });
                    x.iter_mut().for_each(|v| *v = 1.0);
                    continue;
                }
                if drift > recs[i].max_renorm_drift {
                    recs[i].max_renorm_drift = drift;
                }
            }
        }
        recs.into_iter()
            .zip(failed)
            .map(|(rec, f)| match f {
                Some(e) => Err(e),
                None => Ok(rec),
            })
            .collect()
    }
}

/// Builds the packed kernel and runs one trajectory on noise stream 0.
pub fn simulate(model: &CouplingTensor, x0: &SpherePoint, config: &LangevinConfig) -> Result<TrajectoryRecord> {
    LangevinEngine::new(model)?.simulate(x0, config)
}

/// Uniform point on the sphere.
pub fn uniform_start<R: Rng + ?Sized>(n: usize, rng: &mut R) -> SpherePoint {
    random_point(n, rng)
}

/// Result of projected gradient descent or ascent.
#[derive(Debug, Clone)]
pub struct DescentOutcome {
    pub point: SpherePoint,
    pub observables: ObservableTriple,
    pub iterations: usize,
    /// `H` after each accepted iterate, starting with the initial value.
    pub energy_trace: Vec<f64>,
    pub converged: bool,
}

fn energy_and_gradient(kernel: &SymmetricKernel, scale: f64, x: &[f64]) -> (f64, Vec<f64>) {
    let mut work = Vec::new();
    let mut m = Vec::new();
    kernel.contract_last(x, &mut work);
    kernel.local_matrix(&work, 0, x, &mut m);
    let mut mx = vec![0.0; x.len()];
    matvec(&m, x, &mut mx);
    let pc = kernel.p() as f64 * scale;
    (scale * dot(x, &mx), mx.iter().map(|v| pc * v).collect())
}

/// Projected gradient descent (`sign = 1`) or ascent (`sign = -1`) on `H`
/// with Armijo backtracking; stops once `|grad H|^2 / N < delta`.
pub fn projected_descent(
    model: &CouplingTensor,
    kernel: &SymmetricKernel,
    x0: &SpherePoint,
    sign: f64,
    delta: f64,
    max_iters: usize,
) -> DescentOutcome {
    let n = x0.n();
    let nf = n as f64;
    let scale = model.scale();
    let mut x = x0.coords().to_vec();
    let (mut h, mut g) = energy_and_gradient(kernel, scale, &x);
    project_tangent(&x, &mut g);
    let mut trace = vec![h];
    let mut alpha: f64 = 0.1;
    let mut iters = 0;
    let mut converged = norm_sq(&g) / nf < delta;
    while !converged && iters < max_iters {
        let g2 = norm_sq(&g);
        let mut accepted = false;
        alpha = (alpha * 2.0).min(1.0);
        for _ in 0..60 {
            let mut trial = x.clone();
            axpy(-sign * alpha, &g, &mut trial);
            renormalize(&mut trial);
            let (ht, gt) = energy_and_gradient(kernel, scale, &trial);
            if sign * ht <= sign * h - 1e-4 * alpha * g2 {
                x = trial;
                h = ht;
                g = gt;
                project_tangent(&x, &mut g);
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if !accepted {
            break;
        }
        iters += 1;
        trace.push(h);
        converged = norm_sq(&g) / nf < delta;
    }
    let point = SpherePoint::from_normalized_unchecked(x);
    let observables = kernel.jet(&point).observables(point.coords());
    DescentOutcome { point, observables, iterations: iters, energy_trace: trace, converged }
}

/// Near-critical start in `{u > eta, v < delta}` by descent on `H` from a
/// uniform point.
pub fn near_critical_start<R: Rng + ?Sized>(
    model: &CouplingTensor,
    kernel: &SymmetricKernel,
    eta: f64,
    delta: f64,
    max_iters: usize,
    rng: &mut R,
) -> Result<DescentOutcome> {
    let x0 = uniform_start(model.n(), rng);
    let out = projected_descent(model, kernel, &x0, 1.0, delta, max_iters);
    let o = out.observables;
    if !out.converged {
        return Err(Error::NotConverged { iters: out.iterations, u: o.u, v: o.v });
    }
    if o.u <= eta {
        return Err(Error::TargetRegionMiss { u: o.u, v: o.v, eta });
    }
    Ok(out)
}

/// High-energy start: gradient ascent on `H` from a uniform point, so `u`
/// is strongly negative.
pub fn adversarial_start<R: Rng + ?Sized>(
    model: &CouplingTensor,
    kernel: &SymmetricKernel,
    max_iters: usize,
    rng: &mut R,
) -> DescentOutcome {
    let x0 = uniform_start(model.n(), rng);
    projected_descent(model, kernel, &x0, -1.0, 0.05, max_iters)
}

/// Slope estimates over one window of a record.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftEstimate {
    pub t_start: f64,
    pub t_end: f64,
    pub u_mean: f64,
    pub v_mean: f64,
    pub w_mean: f64,
    pub du_dt: f64,
    pub du_se: f64,
    pub dv_dt: f64,
    pub dv_se: f64,
}

pub(crate) fn slope_and_se(t: &[f64], y: &[f64]) -> (f64, f64) {
    let len = t[t.len() - 1] - t[0];
    let slope = (y[y.len() - 1] - y[0]) / len;
    let inc: Vec<f64> = y.windows(2).map(|w| w[1] - w[0]).collect();
    let k = inc.len();
    if k < 2 {
        return (slope, 0.0);
    }
    let mean = inc.iter().sum::<f64>() / k as f64;
    let var = inc.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (k - 1) as f64;
    (slope, var.sqrt() * (k as f64).sqrt() / len)
}

/// Sliding-window (stride 1) slopes of `u` and `v`. The standard error
/// treats the per-sample increments as i.i.d. around the window drift.
pub fn empirical_drift(record: &TrajectoryRecord, window: usize) -> Result<Vec<DriftEstimate>> {
    if window < 2 {
        return Err(Error::InvalidArgument("window must span at least 2 samples".into()));
    }
    if window > record.len() {
        return Err(Error::WindowTooLong { window, len: record.len() });
    }
    let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
    Ok((0..=record.len() - window)
        .map(|s| {
            let e = s + window;
            let t = &record.times[s..e];
            let (du, dus) = slope_and_se(t, &record.u[s..e]);
            let (dv, dvs) = slope_and_se(t, &record.v[s..e]);
            DriftEstimate {
                t_start: t[0],
                t_end: t[window - 1],
                u_mean: mean(&record.u[s..e]),
                v_mean: mean(&record.v[s..e]),
                w_mean: mean(&record.w[s..e]),
                du_dt: du,
                du_se: dus,
                dv_dt: dv,
                dv_se: dvs,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pspin_model::{energy, observables};
    use crate::rng::rng_for;

    fn cfg(beta: f64, horizon: f64, stride: usize, seed: u64) -> LangevinConfig {
        LangevinConfig::new(beta, 1e-3, horizon, stride, seed).unwrap()
    }

    #[test]
    fn config_guards() {
        assert!(LangevinConfig::new(1.0, 0.02, 1.0, 1, 0).is_err());
        assert!(LangevinConfig::new(1.0, 1e-3, 1e-4, 1, 0).is_err());
        assert!(LangevinConfig::new(-1.0, 1e-3, 1.0, 1, 0).is_err());
        assert!(LangevinConfig::new(1.0, 1e-3, 1.0, 0, 0).is_err());
        assert_eq!(cfg(1.0, 1.0, 1, 0).steps(), 1000);
    }

    #[test]
    fn increment_is_tangent() {
        let mut r = rng_for(1, 1, 1);
        let x = uniform_start(50, &mut r);
        let d = brownian_increment(&x, 1e-3, &mut r);
        assert!(dot(&d, x.coords()).abs() <= 1e-8 * norm_sq(&d).sqrt() * (50f64).sqrt());
    }

    #[test]
    fn step_stays_on_sphere() {
        let m = CouplingTensor::sample(3, 20, 3).unwrap();
        let mut r = rng_for(2, 2, 2);
        let x = uniform_start(20, &mut r);
        let y = langevin_step(&m, &x, &cfg(0.0, 1.0, 1, 0), &mut r).unwrap();
        assert!((norm_sq(y.coords()) - 20.0).abs() / 20.0 <= 1e-12);
    }

    #[test]
    fn noiseless_step_descends() {
        let m = CouplingTensor::sample(3, 30, 4).unwrap();
        let eng = LangevinEngine::new(&m).unwrap();
        let x = uniform_start(30, &mut rng_for(3, 3, 3));
        let c = LangevinConfig::new(5.0, 1e-3, 1e-3, 1, 0).unwrap();
        let rec = eng.run(std::slice::from_ref(&x), &c, &[0], &mut NoNoise).pop().unwrap().unwrap();
        assert_eq!(rec.len(), 2);
        assert!(rec.u[1] > rec.u[0], "H must decrease without noise");
    }

    #[test]
    fn first_record_matches_observables() {
        let m = CouplingTensor::sample(3, 25, 5).unwrap();
        let x = uniform_start(25, &mut rng_for(4, 4, 4));
        let rec = simulate(&m, &x, &cfg(1.0, 0.05, 10, 9)).unwrap();
        let o = observables(&m, &x);
        assert!((rec.u[0] - o.u).abs() < 1e-12);
        assert!((rec.v[0] - o.v).abs() < 1e-12);
        assert!((rec.w[0] - o.w).abs() < 1e-12);
        assert_eq!(rec.len(), 6);
        assert!(rec.times.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn simulation_is_deterministic() {
        let m = CouplingTensor::sample(3, 20, 6).unwrap();
        let x = uniform_start(20, &mut rng_for(5, 5, 5));
        let c = cfg(1.0, 0.1, 5, 77);
        let a = simulate(&m, &x, &c).unwrap();
        let b = simulate(&m, &x, &c).unwrap();
        assert_eq!(a.to_csv(), b.to_csv());
        let c2 = cfg(1.0, 0.1, 5, 78);
        assert_ne!(simulate(&m, &x, &c2).unwrap().to_csv(), a.to_csv());
    }

    #[test]
    fn csv_round_trip() {
        let m = CouplingTensor::sample(2, 10, 1).unwrap();
        let x = uniform_start(10, &mut rng_for(1, 1, 2));
        let c = cfg(1.0, 0.02, 2, 3);
        let rec = simulate(&m, &x, &c).unwrap();
        let csv = rec.to_csv();
        assert!(csv.starts_with("t,u,v,w,g1\n"));
        let back = TrajectoryRecord::from_csv(&csv, c).unwrap();
        assert_eq!(back.u, rec.u);
        assert_eq!(back.residual_g1, rec.residual_g1);
    }

    #[test]
    fn descent_is_monotone() {
        let m = CouplingTensor::sample(3, 40, 8).unwrap();
        let k = SymmetricKernel::new(&m).unwrap();
        let x = uniform_start(40, &mut rng_for(8, 8, 8));
        let out = projected_descent(&m, &k, &x, 1.0, 1e-3, 300);
        assert!(out.energy_trace.windows(2).all(|w| w[1] <= w[0]));
        assert!((energy(&m, &out.point) - out.energy_trace.last().unwrap()).abs() < 1e-9);
        let up = projected_descent(&m, &k, &x, -1.0, 1e-3, 300);
        assert!(up.energy_trace.windows(2).all(|w| w[1] >= w[0]));
        assert!(up.observables.u < 0.0);
    }

    fn synthetic(times: Vec<f64>, u: Vec<f64>) -> TrajectoryRecord {
        let len = times.len();
        TrajectoryRecord {
            times,
            u,
            v: vec![1.0; len],
            w: vec![0.0; len],
            residual_g1: vec![0.0; len],
            seed: 0,
            stream: 0,
            config: cfg(1.0, 1.0, 1, 0),
            model_fingerprint: String::new(),
            p: 3,
            n: 2,
            max_renorm_drift: 0.0,
        }
    }

    #[test]
    fn drift_on_synthetic_series() {
        let t: Vec<f64> = (0..50).map(|i| i as f64 * 0.1).collect();
        let flat = synthetic(t.clone(), vec![2.0; 50]);
        for d in empirical_drift(&flat, 5).unwrap() {
            assert_eq!(d.du_dt, 0.0);
            assert_eq!(d.dv_dt, 0.0);
        }
        let lin = synthetic(t.clone(), t.clone());
        for d in empirical_drift(&lin, 7).unwrap() {
            assert!((d.du_dt - 1.0).abs() < 1e-8);
        }
        assert!(matches!(empirical_drift(&lin, 51), Err(Error::WindowTooLong { .. })));
        assert!(empirical_drift(&lin, 1).is_err());
    }
}
