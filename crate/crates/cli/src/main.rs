//! `compositeflow` command-line driver.
//!
//! Exit codes: 0 success, 1 failed verdict or other error, 2 config error,
//! 3 numerical divergence, 4 inconclusive statistical verdict.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use compositeflow::harness::{self, Analyses, RunConfig, RunKind};
use compositeflow::{Error, Verdict};
use serde::Serialize;

#[derive(Parser)]
#[command(name = "compositeflow", version, about = "Linearized proximal ADMM, its continuous limits, and audits")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides `output_dir`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Ensemble size (overrides `ensemble`).
    #[arg(long)]
    seeds: Option<usize>,
    /// Worker threads.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Single run of the configured algorithm or flow.
    Run(Common),
    /// Seeded ensemble of the configured run.
    Ensemble(Common),
    /// Deterministic flow ensemble (uses the `flow` section).
    Flow(Common),
    /// First-order SDE ensemble.
    Sde1(Common),
    /// Second-order SDE ensemble.
    Sde2(Common),
    /// Weak-error table of LP-SADMM against sde1.
    WeakOrder(Common),
    AuditDescent(Common),
    AuditEnergy(Common),
    AuditLyapunov(Common),
    RateFit(Common),
    Criticality(Common),
    /// Collates analyses found in the output directory.
    Report(Common),
}

struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Config(_) | Error::Json(_) => 2,
            Error::Divergence { .. } | Error::NoConvergence { .. } => 3,
            Error::InsufficientData(_) => 4,
            _ => 1,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn load(common: &Common) -> Result<RunConfig, Failure> {
    let mut cfg = harness::load_config(&common.config).map_err(|e| match e {
        Error::Io(io) => Failure {
            code: 2,
            message: format!("cannot read {}: {io}", common.config.display()),
        },
        other => other.into(),
    })?;
    if let Some(seed) = harness::seed_override()? {
        cfg.master_seed = seed;
    }
    if let Some(m) = common.seeds {
        cfg.ensemble = m;
    }
    if let Some(out) = &common.out {
        cfg.output_dir = out.clone();
    }
    cfg.check()?;
    Ok(cfg)
}

fn emit<T: Serialize>(dir: &Path, file: &str, value: &T) -> Result<(), Failure> {
    std::fs::create_dir_all(dir).map_err(Error::from)?;
    harness::write_json(&dir.join(file), value)?;
    println!("{}", serde_json::to_string_pretty(value).map_err(Error::from)?);
    Ok(())
}

fn verdict_code(v: Verdict) -> u8 {
    match v {
        Verdict::Pass => 0,
        Verdict::Fail => 1,
        Verdict::Inconclusive => 4,
    }
}

fn ensemble(mut cfg: RunConfig, kind: Option<RunKind>, jobs: usize) -> Result<u8, Failure> {
    if let Some(k) = kind {
        cfg.algorithm = k;
        cfg.check()?;
    }
    let manifest = harness::run_ensemble(&cfg, jobs)?;
    for s in &manifest.seeds {
        println!("{}", cfg.output_dir.join(&s.file).display());
    }
    println!("{}", cfg.output_dir.join("manifest.json").display());
    Ok(if manifest.all_completed() { 0 } else { 3 })
}

fn execute(command: Command) -> Result<u8, Failure> {
    match command {
        Command::Run(c) => {
            let mut cfg = load(&c)?;
            cfg.ensemble = 1;
            ensemble(cfg, None, c.jobs)
        }
        Command::Ensemble(c) => ensemble(load(&c)?, None, c.jobs),
        Command::Flow(c) => ensemble(load(&c)?, Some(RunKind::Flow), c.jobs),
        Command::Sde1(c) => ensemble(load(&c)?, Some(RunKind::Sde1), c.jobs),
        Command::Sde2(c) => ensemble(load(&c)?, Some(RunKind::Sde2), c.jobs),
        Command::WeakOrder(c) => {
            let cfg = load(&c)?;
            let tables = harness::run_weak_order(&cfg)?;
            emit(&cfg.output_dir, "weak_order.json", &tables)?;
            let flagged = tables.iter().any(|t| t.rows.iter().any(|r| r.flagged));
            Ok(if flagged { 4 } else { 0 })
        }
        Command::AuditDescent(c) => {
            let cfg = load(&c)?;
            let r = harness::run_descent_audit(&cfg)?;
            emit(&cfg.output_dir, "descent.json", &r)?;
            Ok(verdict_code(r.verdict))
        }
        Command::AuditEnergy(c) => {
            let cfg = load(&c)?;
            let r = harness::run_energy_audit(&cfg, c.jobs)?;
            emit(&cfg.output_dir, "energy.json", &r)?;
            Ok(verdict_code(r.verdict))
        }
        Command::AuditLyapunov(c) => {
            let cfg = load(&c)?;
            let r = harness::run_lyapunov_audit(&cfg, c.jobs)?;
            emit(&cfg.output_dir, "lyapunov.json", &r)?;
            Ok(verdict_code(r.verdict))
        }
        Command::RateFit(c) => {
            let cfg = load(&c)?;
            let r = harness::run_rate_fit(&cfg)?;
            emit(&cfg.output_dir, "rate_fit.json", &r)?;
            Ok(0)
        }
        Command::Criticality(c) => {
            let cfg = load(&c)?;
            let r = harness::run_criticality(&cfg)?;
            emit(&cfg.output_dir, "criticality.json", &r)?;
            Ok(if r.pass { 0 } else { 1 })
        }
        Command::Report(c) => {
            let cfg = load(&c)?;
            let dir = &cfg.output_dir;
            let manifest_path = dir.join("manifest.json");
            let manifest = if manifest_path.exists() {
                Some(harness::read_manifest(&manifest_path)?)
            } else {
                None
            };
            let analyses = Analyses::load_dir(dir)?;
            let summary = harness::report(manifest.as_ref(), &analyses, dir)?;
            println!("{}", dir.join("summary.json").display());
            println!("{}", dir.join("plot.dat").display());
            println!("status: {}", summary.status);
            if !summary.gaps.is_empty() {
                println!("missing: {}", summary.gaps.join(", "));
            }
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
