//! Scenario runner: configuration, Langevin ensembles, exact-flow portraits,
//! claims and the summary verdict, and figure data.
//!
//! Configuration files are flat `key = value` text; `#` starts a comment.
//! The resolved configuration (defaults included) is written next to every
//! run as `config.resolved.txt`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::bounding_flows::{
    curve_table_csv, e_inf, integrate_flow, integrate_flow_until, u_c_formula, E0Table, FlowKind,
    FlowParams, PlanePoint, PlaneTrajectory, Terminal, DEFAULT_FLOW_STEP,
};
use crate::comparison::{condition_i_check, graph_confinement_check, ConditionIReport};
use crate::phase_regions::{build_geometry, calibrate_delta, verify_portrait, PhaseGeometry, PortraitReport, Window};
use crate::pspin_model::{CouplingTensor, SpherePoint};
use crate::regularity_diagnostics::{
    bochner_residual, goe_scale_statistics, laplacian_trend, sampled_sup_norms, trace_statistics, StatReport,
};
use crate::rng::{rng_for, DOMAIN_STARTS};
use crate::sphere_dynamics::{
    adversarial_start, near_critical_start, uniform_start, LangevinConfig, LangevinEngine, StreamNoise,
    TrajectoryRecord,
};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    Uniform,
    NearCritical,
    Adversarial,
    FlowsOnly,
    Regularity,
    Portrait,
}

impl Scenario {
    pub fn as_str(&self) -> &'static str {
        match self {
            Scenario::Uniform => "uniform",
            Scenario::NearCritical => "near_critical",
            Scenario::Adversarial => "adversarial",
            Scenario::FlowsOnly => "flows_only",
            Scenario::Regularity => "regularity",
            Scenario::Portrait => "portrait",
        }
    }
}

impl FromStr for Scenario {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "uniform" => Scenario::Uniform,
            "near_critical" => Scenario::NearCritical,
            "adversarial" => Scenario::Adversarial,
            "flows_only" => Scenario::FlowsOnly,
            "regularity" => Scenario::Regularity,
            "portrait" => Scenario::Portrait,
            _ => return Err(Error::Config(format!("unknown scenario '{s}'"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    pub p: usize,
    pub n: usize,
    pub beta: f64,
    pub horizon: f64,
    pub step: f64,
    pub record_stride: usize,
    pub seeds: Vec<u64>,
    /// Root seed for the couplings and the noise streams.
    pub model_seed: u64,
    pub epsilon: f64,
    /// Calibrated from `epsilon` when absent.
    pub delta: Option<f64>,
    pub eta: f64,
    pub delta0: f64,
    pub k_sigma: f64,
    /// Samples per Condition-I window.
    pub drift_window: usize,
    pub k_u: f64,
    pub k_v: f64,
    pub flow_horizon: f64,
    pub portrait_starts: usize,
    pub samples: usize,
    pub n_list: Vec<usize>,
    pub max_iters: usize,
    pub threads: usize,
    pub out: PathBuf,
    /// Ground-state densities `e0_<p>` for `p >= 3`.
    pub e0: BTreeMap<u32, f64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            scenario: Scenario::Uniform,
            p: 3,
            n: 400,
            beta: 1.0,
            horizon: 5.0,
            step: 1e-3,
            record_stride: 10,
            seeds: (0..20).collect(),
            model_seed: 1,
            epsilon: 0.1,
            delta: None,
            eta: 1.2,
            delta0: 0.05,
            k_sigma: 3.0,
            drift_window: 20,
            k_u: 4.0,
            k_v: 40.0,
            flow_horizon: 50.0,
            portrait_starts: 100,
            samples: 20,
            n_list: vec![100, 200, 400],
            max_iters: 5000,
            threads: 1,
            out: PathBuf::from("out"),
            e0: BTreeMap::new(),
        }
    }
}

fn parse_num<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| Error::Config(format!("{key}: cannot parse '{v}'")))
}

fn parse_list<T: FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
    v.split(',').map(|s| parse_num(key, s.trim())).collect()
}

fn join<T: ToString>(xs: &[T]) -> String {
    xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut c = Self::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", lineno + 1)))?;
            c.set(k.trim(), v.trim())?;
        }
        c.validate()?;
        Ok(c)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::parse(&fs::read_to_string(path)?)
    }

    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        match key {
            "scenario" => self.scenario = v.parse()?,
            "p" => self.p = parse_num(key, v)?,
            "n" | "N" => self.n = parse_num(key, v)?,
            "beta" => self.beta = parse_num(key, v)?,
            "horizon" => self.horizon = parse_num(key, v)?,
            "step" => self.step = parse_num(key, v)?,
            "record_stride" => self.record_stride = parse_num(key, v)?,
            "seeds" => {
                self.seeds = match v.split_once("..") {
                    Some((a, b)) => (parse_num::<u64>(key, a.trim())?..parse_num::<u64>(key, b.trim())?).collect(),
                    None => parse_list(key, v)?,
                }
            }
            "model_seed" => self.model_seed = parse_num(key, v)?,
            "epsilon" => self.epsilon = parse_num(key, v)?,
            "delta" => self.delta = if v == "auto" { None } else { Some(parse_num(key, v)?) },
            "eta" => self.eta = parse_num(key, v)?,
            "delta0" => self.delta0 = parse_num(key, v)?,
            "k_sigma" => self.k_sigma = parse_num(key, v)?,
            "drift_window" => self.drift_window = parse_num(key, v)?,
            "k_u" => self.k_u = parse_num(key, v)?,
            "k_v" => self.k_v = parse_num(key, v)?,
            "flow_horizon" => self.flow_horizon = parse_num(key, v)?,
            "portrait_starts" => self.portrait_starts = parse_num(key, v)?,
            "samples" => self.samples = parse_num(key, v)?,
            "n_list" => self.n_list = parse_list(key, v)?,
            "max_iters" => self.max_iters = parse_num(key, v)?,
            "threads" => self.threads = parse_num(key, v)?,
            "out" => self.out = PathBuf::from(v),
            _ => match key.strip_prefix("e0_").map(|s| s.parse::<u32>()) {
                Some(Ok(p)) => {
                    self.e0.insert(p, parse_num(key, v)?);
                }
                _ => return Err(Error::Config(format!("unknown key '{key}'"))),
            },
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(2..=4).contains(&self.p) {
            return bad(format!("p must be 2, 3 or 4, got {}", self.p));
        }
        if self.n < 2 {
            return bad("n must be at least 2".into());
        }
        for (k, v) in [
            ("beta", self.beta),
            ("horizon", self.horizon),
            ("step", self.step),
            ("epsilon", self.epsilon),
            ("eta", self.eta),
            ("delta0", self.delta0),
            ("k_sigma", self.k_sigma),
            ("k_u", self.k_u),
            ("k_v", self.k_v),
            ("flow_horizon", self.flow_horizon),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{k} must be positive, got {v}"));
            }
        }
        if let Some(d) = self.delta {
            if !(d > 0.0) {
                return bad(format!("delta must be positive, got {d}"));
            }
        }
        if self.record_stride == 0 || self.drift_window < 2 || self.threads == 0 || self.max_iters == 0 {
            return bad("record_stride, threads, max_iters >= 1 and drift_window >= 2 required".into());
        }
        if self.seeds.is_empty() {
            return bad("seeds must not be empty".into());
        }
        if self.scenario == Scenario::NearCritical && !(self.delta0 < self.p as f64 * self.eta / self.beta) {
            return bad(format!(
                "near_critical requires delta0 < p eta / beta ({} >= {})",
                self.delta0,
                self.p as f64 * self.eta / self.beta
            ));
        }
        Ok(())
    }

    /// Every key with its resolved value.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "scenario = {}", self.scenario.as_str());
        let _ = writeln!(s, "p = {}", self.p);
        let _ = writeln!(s, "n = {}", self.n);
        let _ = writeln!(s, "beta = {}", self.beta);
        let _ = writeln!(s, "horizon = {}", self.horizon);
        let _ = writeln!(s, "step = {}", self.step);
        let _ = writeln!(s, "record_stride = {}", self.record_stride);
        let _ = writeln!(s, "seeds = {}", join(&self.seeds));
        let _ = writeln!(s, "model_seed = {}", self.model_seed);
        let _ = writeln!(s, "epsilon = {}", self.epsilon);
        let _ = writeln!(s, "delta = {}", self.delta.map(|d| d.to_string()).unwrap_or_else(|| "auto".into()));
        let _ = writeln!(s, "eta = {}", self.eta);
        let _ = writeln!(s, "delta0 = {}", self.delta0);
        let _ = writeln!(s, "k_sigma = {}", self.k_sigma);
        let _ = writeln!(s, "drift_window = {}", self.drift_window);
        let _ = writeln!(s, "k_u = {}", self.k_u);
        let _ = writeln!(s, "k_v = {}", self.k_v);
        let _ = writeln!(s, "flow_horizon = {}", self.flow_horizon);
        let _ = writeln!(s, "portrait_starts = {}", self.portrait_starts);
        let _ = writeln!(s, "samples = {}", self.samples);
        let _ = writeln!(s, "n_list = {}", join(&self.n_list));
        let _ = writeln!(s, "max_iters = {}", self.max_iters);
        let _ = writeln!(s, "threads = {}", self.threads);
        let _ = writeln!(s, "out = {}", self.out.display());
        for (p, e) in &self.e0 {
            let _ = writeln!(s, "e0_{p} = {e}");
        }
        s
    }

    pub fn e0_table(&self) -> E0Table {
        self.e0.iter().fold(E0Table::builtin(), |t, (&p, &e)| t.with(p, e))
    }

    pub fn flow_params(&self) -> Result<FlowParams> {
        FlowParams::from_table(self.p as u32, self.beta, self.e0_table())
    }

    pub fn window(&self) -> Window {
        Window { k_u: self.k_u, k_v: self.k_v }
    }

    pub fn langevin_config(&self) -> Result<LangevinConfig> {
        LangevinConfig::new(self.beta, self.step, self.horizon, self.record_stride, self.model_seed)
    }
}

// ---------------------------------------------------------------------------
// Claims and verdicts

pub const PROVENANCE_TAGS: [&str; 3] = ["theory-scale", "derived-oracle", "repo-calibration"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Claim {
    pub name: String,
    pub paper_anchor: String,
    pub pass: bool,
    pub statistic: Option<f64>,
    pub threshold: Option<f64>,
    pub provenance: String,
}

impl Claim {
    pub fn new(name: &str, anchor: &str, pass: bool, statistic: f64, threshold: f64, provenance: &str) -> Self {
        let fin = |x: f64| x.is_finite().then_some(x);
        Self {
            name: name.into(),
            paper_anchor: anchor.into(),
            pass,
            statistic: fin(statistic),
            threshold: fin(threshold),
            provenance: provenance.into(),
        }
    }

    fn from_stat(r: &StatReport, anchor: &str) -> Self {
        let prov = match r.provenance {
            crate::regularity_diagnostics::Provenance::TheoryScale => "theory-scale",
            crate::regularity_diagnostics::Provenance::DerivedOracle => "derived-oracle",
            crate::regularity_diagnostics::Provenance::RepoCalibration => "repo-calibration",
        };
        let n = r.n.first().copied().unwrap_or(0);
        Self::new(&format!("{}_N{}", r.name, n), anchor, r.pass, r.statistic, r.threshold, prov)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedFailure {
    pub seed: u64,
    pub kind: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub scenario: String,
    pub claims: Vec<Claim>,
    pub seeds_requested: usize,
    pub seeds_reported: usize,
    pub seed_failures: Vec<SeedFailure>,
}

impl Verdict {
    pub fn all_pass(&self) -> bool {
        !self.claims.is_empty() && self.claims.iter().all(|c| c.pass)
    }

    /// 0 when every claim passes, 2 otherwise.
    pub fn exit_code(&self) -> i32 {
        if self.all_pass() {
            0
        } else {
            2
        }
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("verdict.json"), serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

/// Schema problems of a verdict document; empty when valid.
pub fn verdict_schema_errors(doc: &Value) -> Vec<String> {
    let mut errs = Vec::new();
    let Some(claims) = doc.get("claims").and_then(Value::as_array) else {
        errs.push("$.claims: missing or not an array".into());
        return errs;
    };
    if claims.is_empty() {
        errs.push("$.claims: empty".into());
    }
    for (i, c) in claims.iter().enumerate() {
        let at = |f: &str| format!("$.claims[{i}].{f}");
        let Some(obj) = c.as_object() else {
            errs.push(format!("$.claims[{i}]: not an object"));
            continue;
        };
        for f in ["name", "paper_anchor", "provenance"] {
            match obj.get(f).and_then(Value::as_str) {
                Some(s) if !s.is_empty() => {}
                Some(_) => errs.push(format!("{}: empty string", at(f))),
                None => errs.push(format!("{}: missing or not a string", at(f))),
            }
        }
        if let Some(p) = obj.get("provenance").and_then(Value::as_str) {
            if !p.is_empty() && !PROVENANCE_TAGS.contains(&p) {
                errs.push(format!("{}: unknown tag '{p}'", at("provenance")));
            }
        }
        if !obj.get("pass").is_some_and(Value::is_boolean) {
            errs.push(format!("{}: missing or not a boolean", at("pass")));
        }
        for f in ["statistic", "threshold"] {
            match obj.get(f) {
                Some(v) if v.is_number() || v.is_null() => {}
                _ => errs.push(format!("{}: missing or not a number", at(f))),
            }
        }
    }
    errs
}

/// Validates a verdict file; returns the list of schema violations.
pub fn verdict_schema_validate(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path)?;
    match serde_json::from_str::<Value>(&text) {
        Ok(doc) => Ok(verdict_schema_errors(&doc)),
        Err(e) => Ok(vec![format!("$: not JSON ({e})")]),
    }
}

// ---------------------------------------------------------------------------
// Exact-flow portrait

#[derive(Debug, Clone)]
pub struct PortraitOutcome {
    pub geometry: PhaseGeometry,
    pub epsilon: f64,
    pub delta: f64,
    pub starts: Vec<PlanePoint>,
    pub kinds: Vec<FlowKind>,
    pub reports: Vec<PortraitReport>,
    /// Largest entrance time into `A_{0,delta}`; `None` if some flow never enters.
    pub t0: Option<f64>,
    pub arrow_violations: usize,
    pub absorbing_exits: usize,
}

/// Flows from `count` uniform starts in the window, checked against the
/// portrait. Upper flows are included when `bar u_c` is finite.
pub fn exact_flow_portrait(
    params: &FlowParams,
    window: Window,
    epsilon: f64,
    delta: Option<f64>,
    count: usize,
    seed: u64,
    horizon: f64,
) -> Result<PortraitOutcome> {
    let geometry = build_geometry(params, window)?;
    let delta = match delta {
        Some(d) => d,
        None => calibrate_delta(&geometry, epsilon)?,
    };
    let mut rng = rng_for(seed, DOMAIN_STARTS, 0xf10);
    let starts: Vec<PlanePoint> = (0..count)
        .map(|_| PlanePoint::new(rng.random_range(-window.k_u..=window.k_u), rng.random_range(0.0..=window.k_v)))
        .collect();
    let mut kinds = vec![FlowKind::Lower];
    if params.has_upper_fixed_point() {
        kinds.push(FlowKind::Upper);
    }
    let (mut reports, mut all_kinds, mut all_starts) = (Vec::new(), Vec::new(), Vec::new());
    for &z in &starts {
        for &kind in &kinds {
            let traj = integrate_flow(params, kind, z, DEFAULT_FLOW_STEP, horizon)?;
            reports.push(verify_portrait(&geometry, &traj, epsilon, delta)?);
            all_kinds.push(kind);
            all_starts.push(z);
        }
    }
    let t0 = reports
        .iter()
        .try_fold(0.0f64, |acc, r| r.tau_a0_delta.map(|t| acc.max(t)));
    let arrow_violations = reports.iter().map(|r| r.arrow_violations()).sum();
    let absorbing_exits = reports.iter().map(|r| r.absorbing_exits()).sum();
    Ok(PortraitOutcome {
        geometry,
        epsilon,
        delta,
        starts: all_starts,
        kinds: all_kinds,
        reports,
        t0,
        arrow_violations,
        absorbing_exits,
    })
}

fn portrait_claims(o: &PortraitOutcome) -> Vec<Claim> {
    vec![
        Claim::new(
            "portrait_arrow_violations",
            "full phase portrait: region transitions follow the arrows",
            o.arrow_violations == 0,
            o.arrow_violations as f64,
            0.0,
            "derived-oracle",
        ),
        Claim::new(
            "portrait_absorbing_exits",
            "full phase portrait: the enlarged set is absorbing",
            o.absorbing_exits == 0,
            o.absorbing_exits as f64,
            0.0,
            "derived-oracle",
        ),
        Claim::new(
            "portrait_uniform_T0",
            "full phase portrait: uniform entrance time into A_{0,delta}",
            o.t0.is_some(),
            o.t0.unwrap_or(f64::NAN),
            f64::NAN,
            "derived-oracle",
        ),
    ]
}

// ---------------------------------------------------------------------------
// Langevin ensembles

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StartKind {
    Uniform,
    Adversarial,
}

impl StartKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            StartKind::Uniform => "uniform",
            StartKind::Adversarial => "adversarial",
        }
    }

    fn stream_offset(&self) -> u64 {
        match self {
            StartKind::Uniform => 0,
            StartKind::Adversarial => 1 << 32,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SeedRun {
    pub kind: StartKind,
    pub seed: u64,
    pub record: std::result::Result<TrajectoryRecord, String>,
}

#[derive(Debug, Clone)]
pub struct LangevinBatch {
    pub model_fingerprint: String,
    pub config: LangevinConfig,
    pub runs: Vec<SeedRun>,
}

impl LangevinBatch {
    pub fn of_kind(&self, kind: StartKind) -> impl Iterator<Item = &SeedRun> {
        self.runs.iter().filter(move |r| r.kind == kind)
    }

    pub fn failures(&self) -> Vec<SeedFailure> {
        self.runs
            .iter()
            .filter_map(|r| {
                r.record.as_ref().err().map(|e| SeedFailure { seed: r.seed, kind: r.kind.as_str().into(), error: e.clone() })
            })
            .collect()
    }
}

/// Runs `starts` on `streams` split over `threads` workers sharing one kernel.
pub fn run_replicas(
    engine: &LangevinEngine<'_>,
    starts: &[SpherePoint],
    streams: &[u64],
    config: &LangevinConfig,
    threads: usize,
) -> Vec<Result<TrajectoryRecord>> {
    let threads = threads.max(1).min(starts.len().max(1));
    if threads == 1 {
        let mut noise = StreamNoise::new(config.seed, streams);
        return engine.run(starts, config, streams, &mut noise);
    }
    let chunk = starts.len().div_ceil(threads);
    std::thread::scope(|s| {
        let handles: Vec<_> = starts
            .chunks(chunk)
            .zip(streams.chunks(chunk))
            .map(|(xs, ss)| {
                s.spawn(move || {
                    let mut noise = StreamNoise::new(config.seed, ss);
                    engine.run(xs, config, ss, &mut noise)
                })
            })
            .collect();
        handles.into_iter().flat_map(|h| h.join().expect("worker panicked")).collect()
    })
}

/// One coupling draw, one replica per `(kind, seed)`, all in one batch.
pub fn run_langevin_batch(cfg: &ExperimentConfig, kinds: &[StartKind]) -> Result<LangevinBatch> {
    let model = CouplingTensor::sample(cfg.p, cfg.n, cfg.model_seed)?;
    let engine = LangevinEngine::new(&model)?;
    let lcfg = cfg.langevin_config()?;
    let mut starts = Vec::new();
    let mut streams = Vec::new();
    let mut tags = Vec::new();
    for &kind in kinds {
        for &seed in &cfg.seeds {
            let mut rng = rng_for(seed, DOMAIN_STARTS, kind.stream_offset());
            let x = match kind {
                StartKind::Uniform => uniform_start(cfg.n, &mut rng),
                StartKind::Adversarial => adversarial_start(&model, engine.kernel(), cfg.max_iters.min(500), &mut rng).point,
            };
            starts.push(x);
            streams.push(seed + kind.stream_offset());
            tags.push((kind, seed));
        }
    }
    let recs = run_replicas(&engine, &starts, &streams, &lcfg, cfg.threads);
    let runs = tags
        .into_iter()
        .zip(recs)
        .map(|((kind, seed), r)| SeedRun { kind, seed, record: r.map_err(|e| e.to_string()) })
        .collect();
    Ok(LangevinBatch { model_fingerprint: model.fingerprint(), config: lcfg, runs })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConditionISummary {
    pub pooled_fraction: f64,
    pub min_seed_fraction: f64,
    pub per_seed: Vec<(u64, f64)>,
    pub failed_seeds: usize,
}

/// Condition-I reports per seed of one start kind, pooled over windows.
pub fn condition_i_summary(
    params: &FlowParams,
    batch: &LangevinBatch,
    kind: StartKind,
    window: usize,
    k_sigma: f64,
) -> (ConditionISummary, Vec<(u64, std::result::Result<ConditionIReport, String>)>) {
    let mut reports = Vec::new();
    let (mut ok, mut total, mut failed) = (0usize, 0usize, 0usize);
    let mut per_seed = Vec::new();
    for run in batch.of_kind(kind) {
        let r = match &run.record {
            Ok(rec) => condition_i_check(params, rec, window, k_sigma).map_err(|e| e.to_string()),
            Err(e) => Err(e.clone()),
        };
        match &r {
            Ok(rep) => {
                ok += rep.ok;
                total += rep.windows;
                per_seed.push((run.seed, rep.fraction_ok));
            }
            Err(_) => {
                failed += 1;
                per_seed.push((run.seed, 0.0));
            }
        }
        reports.push((run.seed, r));
    }
    let pooled = if total == 0 { 0.0 } else { ok as f64 / total as f64 };
    let min = per_seed.iter().map(|s| s.1).fold(f64::INFINITY, f64::min);
    (ConditionISummary { pooled_fraction: pooled, min_seed_fraction: min, per_seed, failed_seeds: failed }, reports)
}

/// Share of seeds (failures count against) with `u(t) > u_c - epsilon` for
/// every record time in `[t0, T]`.
pub fn going_down_fraction(batch: &LangevinBatch, kind: StartKind, t0: f64, u_c: f64, epsilon: f64) -> f64 {
    let mut hits = 0usize;
    let mut total = 0usize;
    for run in batch.of_kind(kind) {
        total += 1;
        if let Ok(rec) = &run.record {
            let tail: Vec<f64> = rec.times.iter().zip(&rec.u).filter(|(t, _)| **t >= t0).map(|(_, u)| *u).collect();
            if !tail.is_empty() && tail.iter().all(|&u| u > u_c - epsilon) {
                hits += 1;
            }
        }
    }
    if total == 0 {
        0.0
    } else {
        hits as f64 / total as f64
    }
}

fn final_u_positive_fraction(batch: &LangevinBatch, kind: StartKind) -> f64 {
    let runs: Vec<_> = batch.of_kind(kind).collect();
    let hits = runs
        .iter()
        .filter(|r| r.record.as_ref().is_ok_and(|rec| rec.u.last().is_some_and(|&u| u > 0.0)))
        .count();
    hits as f64 / runs.len().max(1) as f64
}

// ---------------------------------------------------------------------------
// Climbing from near-critical starts

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClimbOutcome {
    pub seed: u64,
    pub u0: f64,
    pub v0: f64,
    pub rho: f64,
    /// Least-squares rate of `H/N` (that is, of `-u`) on `[0, rho]`.
    pub rate_h: f64,
    pub rate_v: f64,
    pub climbed: bool,
}

/// First time the lower flow loses `F2_L > 0` or the upper flow loses
/// `F1 < 0`, both started at `z`.
pub fn climb_horizon(params: &FlowParams, z: PlanePoint, cap: f64) -> Result<f64> {
    let lower_stop = |q: PlanePoint| params.f2_lower(q.u, q.v) <= 0.0;
    let upper_stop = |q: PlanePoint| params.f1(q.u, q.v) >= 0.0;
    let mut rho = cap;
    for (kind, stop) in [(FlowKind::Lower, &lower_stop as &dyn Fn(PlanePoint) -> bool), (FlowKind::Upper, &upper_stop)] {
        let t = integrate_flow_until(params, kind, z, DEFAULT_FLOW_STEP, cap, Some(stop))?;
        if t.terminal == Terminal::Stopped || t.terminal == Terminal::Converged {
            rho = rho.min(t.end_time());
        }
    }
    Ok(rho)
}

fn ls_rate(t: &[f64], y: &[f64]) -> f64 {
    let n = t.len() as f64;
    let mt = t.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = t.iter().zip(y).map(|(a, b)| (a - mt) * (b - my)).sum();
    let sxx: f64 = t.iter().map(|a| (a - mt).powi(2)).sum();
    sxy / sxx
}

/// Checks that `H` and `v` rise over `[0, rho]` on one record.
pub fn climb_outcome(params: &FlowParams, seed: u64, rec: &TrajectoryRecord) -> Result<ClimbOutcome> {
    let z = PlanePoint::new(rec.u[0], rec.v[0]);
    let rho = climb_horizon(params, z, rec.times[rec.len() - 1])?;
    let k = rec.times.iter().take_while(|&&t| t <= rho + 1e-12).count();
    if k < 3 {
        return Err(Error::InvalidArgument(format!("only {k} samples in [0, rho = {rho}]")));
    }
    let t = &rec.times[..k];
    let h: Vec<f64> = rec.u[..k].iter().map(|u| -u).collect();
    let rate_h = ls_rate(t, &h);
    let rate_v = ls_rate(t, &rec.v[..k]);
    let climbed = rate_h > 0.0 && rate_v > 0.0 && h[k - 1] > h[0] && rec.v[k - 1] > rec.v[0];
    Ok(ClimbOutcome { seed, u0: z.u, v0: z.v, rho, rate_h, rate_v, climbed })
}

/// Near-critical starts by descent, one replica per seed, then the climb check.
pub fn run_climbing(cfg: &ExperimentConfig) -> Result<(Vec<SeedRun>, Vec<(u64, std::result::Result<ClimbOutcome, String>)>)> {
    let params = cfg.flow_params()?;
    let model = CouplingTensor::sample(cfg.p, cfg.n, cfg.model_seed)?;
    let engine = LangevinEngine::new(&model)?;
    // rho is a few hundredths at typical starts, so every step is recorded
    let lcfg = LangevinConfig::new(cfg.beta, cfg.step, cfg.horizon, 1, cfg.model_seed)?;
    let mut starts = Vec::new();
    let mut streams = Vec::new();
    let mut outcomes: Vec<(u64, std::result::Result<ClimbOutcome, String>)> = Vec::new();
    let mut ok_seeds = Vec::new();
    for &seed in &cfg.seeds {
        let mut rng = rng_for(seed, DOMAIN_STARTS, 2 << 32);
        match near_critical_start(&model, engine.kernel(), cfg.eta, cfg.delta0, cfg.max_iters, &mut rng) {
            Ok(o) => {
                starts.push(o.point);
                streams.push(seed + (2 << 32));
                ok_seeds.push(seed);
            }
            Err(e) => outcomes.push((seed, Err(e.to_string()))),
        }
    }
    let recs = run_replicas(&engine, &starts, &streams, &lcfg, cfg.threads);
    let mut runs = Vec::new();
    for (seed, r) in ok_seeds.into_iter().zip(recs) {
        let out = match &r {
            Ok(rec) => climb_outcome(&params, seed, rec).map_err(|e| e.to_string()),
            Err(e) => Err(e.to_string()),
        };
        outcomes.push((seed, out));
        runs.push(SeedRun { kind: StartKind::Uniform, seed, record: r.map_err(|e| e.to_string()) });
    }
    outcomes.sort_by_key(|o| o.0);
    Ok((runs, outcomes))
}

// ---------------------------------------------------------------------------
// Figure data

/// `{0}` followed by a log grid from `1e-3` to `1e4`.
pub fn beta_grid() -> Vec<f64> {
    let mut g = vec![0.0];
    g.extend((0..=140).map(|i| 10f64.powf(-3.0 + 7.0 * i as f64 / 140.0)));
    g
}

/// Rows `beta,u_c,u_c_over_E0,u_c_over_Einf`; the `E0` column is blank when
/// the ground state is unknown.
pub fn uc_ratio_table(p: u32, table: &E0Table) -> Result<(String, f64)> {
    let lambda = crate::bounding_flows::lambda_p_default(p, table)?;
    let e0 = table.get(p);
    let einf = e_inf(p);
    let mut s = String::from("beta,u_c,u_c_over_E0,u_c_over_Einf\n");
    let mut sup = 0.0f64;
    for b in beta_grid() {
        let uc = u_c_formula(p, b, lambda);
        sup = sup.max(uc / einf);
        let r0 = e0.map(|e| format!("{:.16e}", uc / e)).unwrap_or_default();
        let _ = writeln!(s, "{:.16e},{:.16e},{},{:.16e}", b, uc, r0, uc / einf);
    }
    Ok((s, sup))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FigureSummary {
    pub sup_ratio_einf: BTreeMap<u32, f64>,
    pub files: Vec<String>,
}

/// Writes the u_c ratio tables for `p = 3, 4`, curve tables, region
/// boundaries and the two reference flowlines for `cfg.p`.
pub fn emit_figure_data(cfg: &ExperimentConfig, dir: &Path) -> Result<FigureSummary> {
    fs::create_dir_all(dir)?;
    let mut files = Vec::new();
    let mut put = |name: &str, body: &str| -> Result<()> {
        fs::write(dir.join(name), body)?;
        files.push(name.to_string());
        Ok(())
    };
    let mut sup = BTreeMap::new();
    for p in [3u32, 4] {
        // the lambda bound needs E0_{p-2}; the ratio column to E0_p is optional
        let table = cfg.e0_table();
        let (csv, s) = uc_ratio_table(p, &table)?;
        sup.insert(p, s);
        put(&format!("uc_ratio_p{p}.csv"), &csv)?;
    }
    let params = cfg.flow_params()?;
    let k = (2.0 * cfg.k_u / 0.01).round() as usize;
    let us: Vec<f64> = (0..=k).map(|i| -cfg.k_u + i as f64 * 0.01).collect();
    put("curves.csv", &curve_table_csv(&params, &us))?;
    let geometry = build_geometry(&params, cfg.window())?;
    put("region_boundaries.csv", &geometry.boundaries_csv())?;
    let fixed = serde_json::json!({
        "p": params.p,
        "beta": params.beta,
        "lambda_p": params.lambda_p,
        "u_c": params.u_c(),
        "v_c": params.v_c(),
        "bar_u_c": params.bar_z_c().map(|z| z.u),
        "bar_v_c": params.bar_z_c().map(|z| z.v),
        "window_limited": geometry.window_limited,
    });
    put("fixed_points.json", &serde_json::to_string_pretty(&fixed)?)?;
    let starts = [("uniform", PlanePoint::new(0.0, params.p as f64)), ("critical", PlanePoint::new(1.6, 0.05))];
    for (tag, z) in starts {
        for (kname, kind) in [("lower", FlowKind::Lower), ("upper", FlowKind::Upper)] {
            let k_u = cfg.k_u;
            let stop = move |q: PlanePoint| q.u.abs() > 2.0 * k_u;
            let traj = match integrate_flow_until(&params, kind, z, DEFAULT_FLOW_STEP, cfg.flow_horizon, Some(&stop)) {
                Ok(t) => t,
                Err(Error::FlowBlowUp { partial, .. }) => *partial,
                Err(e) => return Err(e),
            };
            put(&format!("flow_{kname}_{tag}.csv"), &traj.to_csv())?;
        }
    }
    Ok(FigureSummary { sup_ratio_einf: sup, files })
}

// ---------------------------------------------------------------------------
// Scenarios

fn write_json<T: Serialize>(path: &Path, v: &T) -> Result<()> {
    if let Some(d) = path.parent() {
        fs::create_dir_all(d)?;
    }
    fs::write(path, serde_json::to_string_pretty(v)?)?;
    Ok(())
}

fn portrait_for(cfg: &ExperimentConfig, params: &FlowParams) -> Result<PortraitOutcome> {
    exact_flow_portrait(params, cfg.window(), cfg.epsilon, cfg.delta, cfg.portrait_starts, cfg.model_seed, cfg.flow_horizon)
}

fn write_portrait(dir: &Path, o: &PortraitOutcome) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("region_boundaries.csv"), o.geometry.boundaries_csv())?;
    let summary = serde_json::json!({
        "epsilon": o.epsilon,
        "delta": o.delta,
        "T0": o.t0,
        "arrow_violations": o.arrow_violations,
        "absorbing_exits": o.absorbing_exits,
        "window_limited": o.geometry.window_limited,
        "flows": o.starts.iter().zip(&o.kinds).zip(&o.reports).map(|((z, k), r)| serde_json::json!({
            "start": z, "kind": format!("{k:?}"), "report": r,
        })).collect::<Vec<_>>(),
    });
    write_json(&dir.join("portrait.json"), &summary)
}

/// Claims for one Langevin start kind.
pub fn langevin_claims(
    cfg: &ExperimentConfig,
    params: &FlowParams,
    batch: &LangevinBatch,
    kind: StartKind,
    t0: Option<f64>,
    dir: &Path,
) -> Result<Vec<Claim>> {
    let k = kind.as_str();
    let (ci, reports) = condition_i_summary(params, batch, kind, cfg.drift_window, cfg.k_sigma);
    let geometry = build_geometry(params, cfg.window())?;
    let delta = match cfg.delta {
        Some(d) => d,
        None => calibrate_delta(&geometry, cfg.epsilon)?,
    };
    let mut entered = 0usize;
    let mut total = 0usize;
    for (run, (_, rep)) in batch.of_kind(kind).zip(&reports) {
        total += 1;
        let sd = dir.join(format!("seed_{k}_{}", run.seed));
        fs::create_dir_all(&sd)?;
        match &run.record {
            Ok(rec) => {
                rec.write(&sd, "trajectory")?;
                let traj = PlaneTrajectory::from_record(rec)?;
                let pr = verify_portrait(&geometry, &traj, cfg.epsilon, delta)?;
                if pr.tau_a0_delta.is_some() {
                    entered += 1;
                }
                write_json(&sd.join("portrait.json"), &pr)?;
            }
            Err(e) => fs::write(sd.join("error.txt"), e)?,
        }
        match rep {
            Ok(r) => write_json(&sd.join("condition_i.json"), r)?,
            Err(e) => fs::write(sd.join("condition_i_error.txt"), e)?,
        }
    }
    write_json(&dir.join(format!("condition_i_{k}.json")), &ci)?;
    let mut claims = vec![
        Claim::new(
            &format!("condition_I_{k}"),
            "bounding flows: (u, v) satisfies the differential inequality",
            ci.pooled_fraction >= 0.9,
            ci.pooled_fraction,
            0.9,
            "derived-oracle",
        ),
        Claim::new(
            &format!("enters_A0_delta_{k}"),
            "full phase portrait: paths reach A_{0,delta}",
            entered as f64 >= 0.9 * total as f64,
            entered as f64 / total.max(1) as f64,
            0.9,
            "derived-oracle",
        ),
    ];
    let frac = match t0 {
        Some(t0) if t0 < cfg.horizon => going_down_fraction(batch, kind, t0, params.u_c(), cfg.epsilon),
        _ => 0.0,
    };
    claims.push(Claim::new(
        &format!("going_down_{k}"),
        "performance guarantee: u(t) > u_c - eps on [T0, T]",
        frac >= 0.9,
        frac,
        0.9,
        "derived-oracle",
    ));
    if kind == StartKind::Uniform {
        let pos = final_u_positive_fraction(batch, kind);
        claims.push(Claim::new(
            "final_u_positive_uniform",
            "descent to order-N energies from uniform starts",
            pos >= 0.95,
            pos,
            0.95,
            "derived-oracle",
        ));
        let recs: Vec<&TrajectoryRecord> = batch.of_kind(kind).filter_map(|r| r.record.as_ref().ok()).collect();
        if !recs.is_empty() {
            let mean = TrajectoryRecord::mean_of(&recs)?;
            let traj = PlaneTrajectory::from_record(&mean)?;
            match graph_confinement_check(params, &traj, traj.first(), 0.1) {
                Ok(g) => {
                    fs::write(dir.join("mean_path_confinement.csv"), g.to_csv())?;
                    claims.push(Claim::new(
                        "mean_path_confinement_uniform",
                        "bounding flow lines confine the mean path",
                        g.violation_fraction() <= 0.01,
                        g.violation_fraction(),
                        0.01,
                        "derived-oracle",
                    ));
                }
                Err(e) => claims.push(Claim::new(
                    "mean_path_confinement_uniform",
                    &format!("bounding flow lines confine the mean path ({e})"),
                    false,
                    f64::NAN,
                    0.01,
                    "derived-oracle",
                )),
            }
        }
    }
    Ok(claims)
}

fn climbing_claims(outcomes: &[(u64, std::result::Result<ClimbOutcome, String>)]) -> Claim {
    let ok = outcomes.iter().filter(|o| o.1.as_ref().is_ok_and(|c| c.climbed)).count();
    let frac = ok as f64 / outcomes.len().max(1) as f64;
    Claim::new(
        "climbing_saddles",
        "climbing saddles and wells: H and v rise on [0, rho]",
        frac >= 0.9,
        frac,
        0.9,
        "derived-oracle",
    )
}

fn regularity_claims(cfg: &ExperimentConfig, dir: &Path) -> Result<Vec<Claim>> {
    let mut claims = Vec::new();
    let mut reports: Vec<StatReport> = Vec::new();
    let (a, b) = trace_statistics(cfg.p, cfg.n, cfg.samples.max(10), cfg.model_seed)?;
    claims.push(Claim::from_stat(&a, "GOE regularity: trace of G"));
    claims.push(Claim::from_stat(&b, "GOE regularity: trace of G squared"));
    reports.extend([a, b]);
    let (c, d) = goe_scale_statistics(cfg.p, cfg.n, cfg.samples.max(10), cfg.model_seed, cfg.max_iters)?;
    claims.push(Claim::from_stat(&c, "GOE regularity: C_p^2 = 2p(p-1)"));
    claims.push(Claim::from_stat(&d, "GOE regularity: operator norm at a point"));
    reports.extend([c, d]);
    let lt = laplacian_trend(cfg.p, &cfg.n_list, cfg.samples.max(10), cfg.model_seed)?;
    claims.push(Claim::from_stat(&lt, "Laplacian estimate: Delta H = -pH + o(N)"));
    fs::write(dir.join("laplacian_trend.csv"), lt.to_csv())?;
    reports.push(lt);
    if cfg.p == 3 {
        let n = cfg.n.min(300);
        let model = CouplingTensor::sample(3, n, cfg.model_seed)?;
        let mut rng = rng_for(cfg.model_seed, DOMAIN_STARTS, 0xb0);
        let mut vals = Vec::new();
        for _ in 0..cfg.samples.max(10) {
            vals.push(bochner_residual(&model, &uniform_start(n, &mut rng))?.residual.abs());
        }
        let worst = vals.iter().cloned().fold(0.0, f64::max);
        let bound = 5.0 / (n as f64).sqrt();
        claims.push(Claim::new(
            &format!("bochner_residual_N{n}"),
            "Bochner estimate for |grad H|^2",
            worst <= bound,
            worst,
            bound,
            "derived-oracle",
        ));
    }
    let model = CouplingTensor::sample(cfg.p, cfg.n, cfg.model_seed)?;
    for r in sampled_sup_norms(&model, 100, cfg.model_seed, cfg.window())? {
        if r.threshold.is_finite() {
            claims.push(Claim::from_stat(&r, "regularity: sampled sup stays inside the window"));
        }
        reports.push(r);
    }
    write_json(&dir.join("stat_reports.json"), &reports)?;
    Ok(claims)
}

fn flows_only(cfg: &ExperimentConfig, dir: &Path) -> Result<Vec<Claim>> {
    let params = cfg.flow_params()?;
    let fig = emit_figure_data(cfg, dir)?;
    let z = params.z_c();
    let resid = params.f1(z.u, z.v).abs().max(params.f2_lower(z.u, z.v).abs());
    let lower = integrate_flow(&params, FlowKind::Lower, PlanePoint::new(0.0, params.p as f64), DEFAULT_FLOW_STEP, 50.0)?;
    let dist = lower.last().dist_inf(&z);
    let mut claims = vec![
        Claim::new("z_c_is_fixed_point", "explicit u_c: z_c solves F1 = F2_L = 0", resid <= 1e-10, resid, 1e-10, "derived-oracle"),
        Claim::new("lower_flow_reaches_z_c", "lower flow converges to z_c", dist <= 1e-6, dist, 1e-6, "derived-oracle"),
    ];
    if let Some(&s) = fig.sup_ratio_einf.get(&3) {
        let target = 1.0 / (2.0 * (2f64.sqrt() + 1.0));
        claims.push(Claim::new(
            "uc_over_Einf_sup_p3",
            "fraction of the threshold energy",
            (s - target).abs() <= 1e-3,
            s,
            target,
            "theory-scale",
        ));
    }
    Ok(claims)
}

/// Runs the configured scenario, writes artifacts under `cfg.out`, and
/// returns the verdict (also written as `verdict.json`).
pub fn run_scenario(cfg: &ExperimentConfig) -> Result<Verdict> {
    cfg.validate()?;
    let dir = cfg.out.clone();
    fs::create_dir_all(&dir)?;
    fs::write(dir.join("config.resolved.txt"), cfg.to_text())?;
    let params = cfg.flow_params()?;
    let mut failures = Vec::new();
    let mut requested = 0;
    let mut reported = 0;
    let claims = match cfg.scenario {
        Scenario::FlowsOnly => flows_only(cfg, &dir)?,
        Scenario::Portrait => {
            let o = portrait_for(cfg, &params)?;
            write_portrait(&dir.join("portrait"), &o)?;
            portrait_claims(&o)
        }
        Scenario::Regularity => regularity_claims(cfg, &dir)?,
        Scenario::Uniform | Scenario::Adversarial => {
            let kind = if cfg.scenario == Scenario::Uniform { StartKind::Uniform } else { StartKind::Adversarial };
            let o = portrait_for(cfg, &params)?;
            write_portrait(&dir.join("portrait"), &o)?;
            let batch = run_langevin_batch(cfg, &[kind])?;
            requested = cfg.seeds.len();
            reported = batch.runs.len();
            failures = batch.failures();
            let mut c = portrait_claims(&o);
            c.extend(langevin_claims(cfg, &params, &batch, kind, o.t0, &dir)?);
            c
        }
        Scenario::NearCritical => {
            let (runs, outcomes) = run_climbing(cfg)?;
            requested = cfg.seeds.len();
            reported = outcomes.len();
            for (seed, o) in &outcomes {
                if let Err(e) = o {
                    failures.push(SeedFailure { seed: *seed, kind: "near_critical".into(), error: e.clone() });
                }
            }
            for r in &runs {
                if let Ok(rec) = &r.record {
                    rec.write(&dir.join(format!("seed_near_critical_{}", r.seed)), "trajectory")?;
                }
            }
            let json: Vec<Value> = outcomes
                .iter()
                .map(|(s, o)| match o {
                    Ok(c) => serde_json::to_value(c).unwrap_or(Value::Null),
                    Err(e) => serde_json::json!({ "seed": s, "error": e }),
                })
                .collect();
            write_json(&dir.join("climbing.json"), &json)?;
            vec![climbing_claims(&outcomes)]
        }
    };
    let verdict = Verdict {
        scenario: cfg.scenario.as_str().into(),
        claims,
        seeds_requested: requested,
        seeds_reported: reported,
        seed_failures: failures,
    };
    verdict.write(&dir)?;
    Ok(verdict)
}
