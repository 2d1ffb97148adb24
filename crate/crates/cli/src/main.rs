use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use pspin_core::experiment::{
    emit_figure_data, run_scenario, verdict_schema_validate, ExperimentConfig, Scenario, Verdict,
};
use pspin_core::{Error, Result};

/// Spherical p-spin Langevin dynamics and bounding-flow diagnostics.
///
/// Exit codes: 0 all claims pass, 2 some claim fails, 1 runtime or
/// configuration error.
#[derive(Parser, Debug)]
#[command(name = "pspin", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone, Default)]
struct Common {
    /// Configuration file of `key = value` lines.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Replace the seed list with a single seed.
    #[arg(long)]
    seed_override: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for replica batches.
    #[arg(long)]
    threads: Option<usize>,
    /// Extra `key=value` overrides, applied after the file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Langevin ensemble (uniform, adversarial or near_critical starts).
    Simulate(Common),
    /// Flow fixed points, reference flowlines and threshold ratios.
    Flows(Common),
    /// Exact-flow phase portrait from random starts in the window.
    Portrait(Common),
    /// Run the scenario named in the configuration.
    Verify(Common),
    /// Finite-N Gaussian field statistics.
    Regularity(Common),
    /// Write figure tables only.
    Figures(Common),
    /// Check a verdict file against the schema.
    Validate {
        /// Path to verdict.json.
        path: PathBuf,
    },
}

fn load(common: &Common, forced: Option<Scenario>) -> Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(p) => ExperimentConfig::from_file(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = forced {
        cfg.scenario = s;
    }
    for kv in &common.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got '{kv}'")))?;
        cfg.set(k.trim(), v.trim())?;
    }
    if let Some(s) = common.seed_override {
        cfg.seeds = vec![s];
    }
    if let Some(o) = &common.out {
        cfg.out = o.clone();
    }
    if let Some(t) = common.threads {
        cfg.threads = t;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn report(v: &Verdict) -> i32 {
    for c in &v.claims {
        let stat = c.statistic.map(|s| format!("{s:.6e}")).unwrap_or_else(|| "-".into());
        let thr = c.threshold.map(|s| format!("{s:.6e}")).unwrap_or_else(|| "-".into());
        println!("{} {} statistic={} threshold={}", if c.pass { "PASS" } else { "FAIL" }, c.name, stat, thr);
    }
    for f in &v.seed_failures {
        eprintln!("seed {} ({}) failed: {}", f.seed, f.kind, f.error);
    }
    v.exit_code()
}

fn run(cli: Cli) -> Result<i32> {
    let scenario = |c: &Common, s: Option<Scenario>| -> Result<i32> {
        let cfg = load(c, s)?;
        let v = run_scenario(&cfg)?;
        println!("wrote {}", cfg.out.join("verdict.json").display());
        Ok(report(&v))
    };
    match cli.command {
        Command::Simulate(c) => {
            let cfg = load(&c, None)?;
            if !matches!(cfg.scenario, Scenario::Uniform | Scenario::Adversarial | Scenario::NearCritical) {
                return Err(Error::Config(format!(
                    "simulate needs scenario uniform, adversarial or near_critical, got {}",
                    cfg.scenario.as_str()
                )));
            }
            scenario(&c, None)
        }
        Command::Flows(c) => scenario(&c, Some(Scenario::FlowsOnly)),
        Command::Portrait(c) => scenario(&c, Some(Scenario::Portrait)),
        Command::Regularity(c) => scenario(&c, Some(Scenario::Regularity)),
        Command::Verify(c) => scenario(&c, None),
        Command::Figures(c) => {
            let cfg = load(&c, None)?;
            std::fs::create_dir_all(&cfg.out)?;
            std::fs::write(cfg.out.join("config.resolved.txt"), cfg.to_text())?;
            let s = emit_figure_data(&cfg, &cfg.out)?;
            for f in &s.files {
                println!("wrote {}", cfg.out.join(f).display());
            }
            for (p, r) in &s.sup_ratio_einf {
                println!("p={p} sup u_c/E_inf = {r:.6}");
            }
            Ok(0)
        }
        Command::Validate { path } => {
            let errs = verdict_schema_validate(&path)?;
            if errs.is_empty() {
                println!("valid");
                Ok(0)
            } else {
                for e in &errs {
                    println!("{e}");
                }
                Ok(2)
            }
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
