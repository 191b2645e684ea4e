//! Run configuration, ensemble orchestration, manifests and reports.
//!
//! Every output byte is a function of the config bytes and the code version.
//! Wall-clock timings are kept out of the manifest and written to a separate
//! `timing.json`.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{
    choose_c, criticality_report, descent_audit, energy_identity_gap, lyapunov_audit, objective_gaps, rate_fit,
    AuditObjective, CriticalityReport, DescentAudit, EnergyGap, LyapunovAudit, RateFit, Verdict,
};
use crate::csvio::{read_matrix, read_vector};
use crate::dynamics::{simulate, weak_error, FlowConfig, FlowKind, SampledPath, WeakErrorConfig, WeakErrorTable};
use crate::error::{check_len, Error, Result};
use crate::operators::LinearMap;
use crate::problems::{build_operator, generate_data, CompositeProblem, NoiseMode, NoiseSpec, OperatorKind, SmoothFamily, SmoothSum};
use crate::regularizers::{Regularizer, RegularizerSpec};
use crate::rng::mix_seed;
use crate::solvers::{run, validate, Algorithm, CheckedParams, RunOptions, RunStatus, SolverParams, Trajectory};

pub const CODE_VERSION: &str = concat!("compositeflow ", env!("CARGO_PKG_VERSION"));
pub const SCHEMA_VERSION: u32 = 1;
pub const SEED_ENV: &str = "COMPOSITEFLOW_SEED";
pub const FLOW_HEADER: &str = "t,H,H_mu,residual,x_norm,v_norm";

/// What a config runs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunKind {
    LpAdmm,
    LpSadmm,
    AccLpSadmm,
    Flow,
    Sde1,
    Sde2,
}

impl RunKind {
    pub fn algorithm(self) -> Option<Algorithm> {
        match self {
            RunKind::LpAdmm => Some(Algorithm::LpAdmm),
            RunKind::LpSadmm => Some(Algorithm::LpSadmm),
            RunKind::AccLpSadmm => Some(Algorithm::AccLpSadmm),
            _ => None,
        }
    }

    pub fn flow(self) -> Option<FlowKind> {
        match self {
            RunKind::Flow => Some(FlowKind::Flow),
            RunKind::Sde1 => Some(FlowKind::Sde1),
            RunKind::Sde2 => Some(FlowKind::Sde2),
            _ => None,
        }
    }
}

/// Problem data: either generated from `data_seed` or read from CSV files
/// (paths relative to the working directory).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSpec {
    pub n: usize,
    /// Rows of `A`; defaults to `n`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    /// Number of smooth components `N`.
    #[serde(default = "default_components")]
    pub components: usize,
    #[serde(default)]
    pub smooth: SmoothFamily,
    #[serde(default = "default_operator")]
    pub operator: OperatorKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub design_csv: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub targets_csv: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub operator_csv: Option<PathBuf>,
    pub regularizer: RegularizerSpec,
    pub mu: f64,
    #[serde(default)]
    pub data_seed: u64,
    #[serde(default = "default_noise_level")]
    pub noise_level: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
}

fn default_components() -> usize {
    50
}
fn default_operator() -> OperatorKind {
    OperatorKind::Identity
}
fn default_noise_level() -> f64 {
    0.1
}

/// Tolerances and windows for the audit subcommands.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuditSpec {
    /// Descent audit passes when `max_violation <= descent_tolerance (1 + |H(x0)|)`.
    #[serde(default = "default_descent_tol")]
    pub descent_tolerance: f64,
    #[serde(default)]
    pub t1: f64,
    /// Defaults to the flow horizon.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t2: Option<f64>,
    #[serde(default = "default_energy_tol")]
    pub energy_tolerance: f64,
    #[serde(default = "default_se_multiplier")]
    pub se_multiplier: f64,
    /// Records between Lyapunov evaluations.
    #[serde(default = "default_lyapunov_stride")]
    pub lyapunov_stride: usize,
    #[serde(default = "default_bootstrap_seed")]
    pub bootstrap_seed: u64,
}

fn default_descent_tol() -> f64 {
    1e-6
}
fn default_energy_tol() -> f64 {
    0.1
}
fn default_se_multiplier() -> f64 {
    2.0
}
fn default_lyapunov_stride() -> usize {
    10
}
fn default_bootstrap_seed() -> u64 {
    0x5eed
}

impl Default for AuditSpec {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all audit fields have defaults")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: ProblemSpec,
    pub algorithm: RunKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solver: Option<SolverParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flow: Option<FlowConfig>,
    #[serde(default = "default_noise")]
    pub noise: NoiseMode,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default = "default_ensemble")]
    pub ensemble: usize,
    /// Records written to CSV every `stride` steps.
    #[serde(default = "default_stride")]
    pub stride: usize,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weak_order: Option<WeakErrorConfig>,
    #[serde(default)]
    pub audit: AuditSpec,
}

fn default_noise() -> NoiseMode {
    NoiseMode::Exact
}
fn default_ensemble() -> usize {
    1
}
fn default_stride() -> usize {
    1
}
fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| Error::Config(format!("invalid config: {e}")))?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Structural and constraint checks; builds the problem once.
    pub fn check(&self) -> Result<()> {
        if self.ensemble == 0 {
            return Err(Error::Config("ensemble must be at least 1".into()));
        }
        if self.stride == 0 {
            return Err(Error::Config("stride must be at least 1".into()));
        }
        let problem = build_problem(&self.problem)?;
        if let Some(a) = self.algorithm.algorithm() {
            self.checked_params(&problem, a)?;
        }
        if self.algorithm.flow().is_some() {
            self.flow_config(&problem)?;
        }
        Ok(())
    }

    fn solver(&self) -> Result<&SolverParams> {
        self.solver
            .as_ref()
            .ok_or_else(|| Error::Config(format!("algorithm {:?} needs a `solver` section", self.algorithm)))
    }

    pub fn checked_params(&self, problem: &CompositeProblem, algorithm: Algorithm) -> Result<CheckedParams> {
        let solver = self.solver()?;
        if solver.mu != self.problem.mu {
            return Err(Error::Config(format!(
                "solver.mu ({}) must equal problem.mu ({})",
                solver.mu, self.problem.mu
            )));
        }
        validate(solver, algorithm, problem.operator(), problem.h()).map_err(|e| match e {
            Error::Config(m) | Error::Usage(m) => Error::Config(m),
            other => other,
        })
    }

    /// The flow section with `x0` falling back to `problem.x0`.
    pub fn flow_config(&self, problem: &CompositeProblem) -> Result<FlowConfig> {
        let mut flow = self
            .flow
            .clone()
            .ok_or_else(|| Error::Config(format!("algorithm {:?} needs a `flow` section", self.algorithm)))?;
        if flow.x0.is_none() {
            flow.x0 = self.problem.x0.clone();
        }
        flow.validate(problem)?;
        Ok(flow)
    }

    pub fn x0(&self) -> Option<DVector<f64>> {
        self.problem.x0.as_ref().map(|v| DVector::from_column_slice(v))
    }

    /// Seed of ensemble member `i`.
    pub fn member_seed(&self, i: usize) -> u64 {
        mix_seed(self.master_seed, i as u64)
    }
}

/// Reads, parses and validates a config file.
pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = fs::read_to_string(path)?;
    RunConfig::from_json(&text)
}

/// Value of `COMPOSITEFLOW_SEED`, if set.
pub fn seed_override() -> Result<Option<u64>> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| Error::Config(format!("{SEED_ENV} must be an unsigned integer, got {v:?}"))),
        Err(_) => Ok(None),
    }
}

pub fn build_problem(spec: &ProblemSpec) -> Result<CompositeProblem> {
    let n = spec.n;
    if n == 0 {
        return Err(Error::Config("problem.n must be positive".into()));
    }
    let (design, targets) = match (&spec.design_csv, &spec.targets_csv) {
        (Some(d), Some(t)) => (read_matrix(d)?, read_vector(t)?),
        (None, None) => generate_data(n, spec.components, spec.noise_level, spec.data_seed),
        _ => {
            return Err(Error::Config(
                "problem.design_csv and problem.targets_csv must be given together".into(),
            ))
        }
    };
    check_len("design columns", n, design.ncols())?;
    let a = match &spec.operator_csv {
        Some(path) => LinearMap::with_seed(read_matrix(path)?, spec.data_seed)?,
        None => build_operator(&spec.operator, spec.m.unwrap_or(n), n, spec.data_seed)?,
    };
    check_len("operator columns", n, a.cols())?;
    if let Some(m) = spec.m {
        check_len("operator rows", m, a.rows())?;
    }
    if let Some(x0) = &spec.x0 {
        check_len("problem.x0", n, x0.len())?;
    }
    let h = Regularizer::new(spec.regularizer.to_penalty()?, a.rows())?;
    CompositeProblem::new(SmoothSum::new(design, targets, spec.smooth)?, h, a, spec.mu)
}

/// Constants a verdict may depend on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DerivedConstants {
    pub gram_norm: f64,
    pub lambda_min: f64,
    pub l_f: f64,
    pub l_h: f64,
    pub varrho: f64,
    /// `L = L_f + max{1/mu, varrho/(1 - varrho mu)} ||A||^2`.
    pub smoothness: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_min: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eps_criticality_bound: Option<f64>,
}

pub fn derived_constants(cfg: &RunConfig, problem: &CompositeProblem) -> Result<DerivedConstants> {
    let mut d = DerivedConstants {
        gram_norm: problem.operator().gram_norm(),
        lambda_min: problem.operator().lambda_min(),
        l_f: problem.f().lipschitz(),
        l_h: problem.h().lipschitz(),
        varrho: problem.h().modulus(),
        smoothness: problem.smoothness(),
        tau: None,
        beta: None,
        lambda: None,
        t_min: None,
        eps_criticality_bound: problem.eps_criticality_bound().ok(),
    };
    if let Some(a) = cfg.algorithm.algorithm() {
        let p = cfg.checked_params(problem, a)?;
        d.tau = Some(p.tau);
        d.beta = (a == Algorithm::AccLpSadmm).then_some(p.beta);
        d.lambda = Some(p.lambda);
    }
    if cfg.algorithm.flow().is_some() {
        let f = cfg.flow_config(problem)?;
        d.lambda = Some(f.lambda);
        d.t_min = (cfg.algorithm == RunKind::Sde2).then(|| f.t_min());
    }
    Ok(d)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedEntry {
    pub index: usize,
    pub seed: u64,
    pub file: String,
    #[serde(flatten)]
    pub status: RunStatus,
    pub records: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub code_version: String,
    pub config: RunConfig,
    pub derived: DerivedConstants,
    pub csv_header: String,
    pub seeds: Vec<SeedEntry>,
    /// `completed` when every seed completed, `partial` otherwise.
    pub status: String,
}

impl RunManifest {
    pub fn all_completed(&self) -> bool {
        self.seeds.iter().all(|s| s.status == RunStatus::Completed)
    }
}

/// One ensemble member, before it is written out.
enum MemberOutput {
    Algorithm(Trajectory),
    Path(SampledPath),
}

fn trajectory_file(i: usize) -> String {
    format!("traj_seed{i:04}.csv")
}

fn run_member(cfg: &RunConfig, problem: &CompositeProblem, i: usize) -> Result<MemberOutput> {
    let seed = cfg.member_seed(i);
    if let Some(algorithm) = cfg.algorithm.algorithm() {
        let mut params = cfg.checked_params(problem, algorithm)?;
        params.seed = seed;
        let noise = NoiseSpec {
            mode: cfg.noise,
            master_seed: seed,
        };
        let options = RunOptions {
            x0: cfg.x0(),
            record_stride: cfg.stride,
            state_stride: usize::MAX,
        };
        return Ok(MemberOutput::Algorithm(run(problem, &params, &noise, &options)?));
    }
    let kind = cfg.algorithm.flow().expect("run kind is an algorithm or a flow");
    let mut flow = cfg.flow_config(problem)?;
    flow.seed = seed;
    Ok(MemberOutput::Path(simulate(kind, problem, &flow)?))
}

fn write_member(out: &MemberOutput, stride: usize, path: &Path) -> Result<(RunStatus, usize)> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    let result = match out {
        MemberOutput::Algorithm(t) => {
            t.write_csv(&mut w)?;
            (t.status.clone(), t.records.len())
        }
        MemberOutput::Path(p) => {
            writeln!(w, "{FLOW_HEADER}")?;
            let mut rows = 0;
            let last = p.times.len().saturating_sub(1);
            for i in (0..p.times.len()).filter(|&i| i % stride == 0 || i == last) {
                let v = p.velocities.get(i).map_or(0.0, |v| v.norm());
                writeln!(
                    w,
                    "{:e},{:e},{:e},{:e},{:e},{:e}",
                    p.times[i],
                    p.h[i],
                    p.h_mu[i],
                    p.residual[i],
                    p.states[i].norm(),
                    v
                )?;
                rows += 1;
            }
            let status = match p.diverged_at {
                None => RunStatus::Completed,
                Some(step) => RunStatus::Diverged {
                    step,
                    what: "state left the finite range".into(),
                },
            };
            (status, rows)
        }
    };
    w.flush()?;
    Ok(result)
}

fn header_for(kind: RunKind) -> &'static str {
    if kind.algorithm().is_some() {
        crate::solvers::TRAJECTORY_HEADER
    } else {
        FLOW_HEADER
    }
}

fn thread_pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Usage(format!("cannot start worker pool: {e}")))
}

/// Runs `cfg.ensemble` members on `jobs` workers, writes one CSV per member,
/// `manifest.json` and `timing.json` into `cfg.output_dir`.
pub fn run_ensemble(cfg: &RunConfig, jobs: usize) -> Result<RunManifest> {
    let started = Instant::now();
    let problem = build_problem(&cfg.problem)?;
    let derived = derived_constants(cfg, &problem)?;
    fs::create_dir_all(&cfg.output_dir)?;
    let pool = thread_pool(jobs)?;
    let results: Vec<Result<(SeedEntry, f64)>> = pool.install(|| {
        (0..cfg.ensemble)
            .into_par_iter()
            .map(|i| {
                let t0 = Instant::now();
                let out = run_member(cfg, &problem, i)?;
                let file = trajectory_file(i);
                let (status, records) = write_member(&out, cfg.stride, &cfg.output_dir.join(&file))?;
                Ok((
                    SeedEntry {
                        index: i,
                        seed: cfg.member_seed(i),
                        file,
                        status,
                        records,
                    },
                    t0.elapsed().as_secs_f64(),
                ))
            })
            .collect()
    });
    let mut seeds = Vec::with_capacity(results.len());
    let mut timing = BTreeMap::new();
    for r in results {
        let (entry, secs) = r?;
        timing.insert(entry.file.clone(), secs);
        seeds.push(entry);
    }
    let status = if seeds.iter().all(|s| s.status == RunStatus::Completed) {
        "completed"
    } else {
        "partial"
    };
    let manifest = RunManifest {
        schema_version: SCHEMA_VERSION,
        code_version: CODE_VERSION.into(),
        config: cfg.clone(),
        derived,
        csv_header: header_for(cfg.algorithm).into(),
        seeds,
        status: status.into(),
    };
    write_json(&cfg.output_dir.join("manifest.json"), &manifest)?;
    let timing_doc = serde_json::json!({
        "per_seed_seconds": timing,
        "total_seconds": started.elapsed().as_secs_f64(),
        "jobs": jobs,
    });
    write_json(&cfg.output_dir.join("timing.json"), &timing_doc)?;
    Ok(manifest)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn read_manifest(path: &Path) -> Result<RunManifest> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

/// Simulates `cfg.ensemble` paths of `kind` in memory, in seed order.
pub fn simulate_ensemble(cfg: &RunConfig, problem: &CompositeProblem, kind: FlowKind, jobs: usize) -> Result<Vec<SampledPath>> {
    let flow = cfg.flow_config(problem)?;
    let pool = thread_pool(jobs)?;
    pool.install(|| {
        (0..cfg.ensemble)
            .into_par_iter()
            .map(|i| {
                let mut f = flow.clone();
                f.seed = cfg.member_seed(i);
                simulate(kind, problem, &f)
            })
            .collect()
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DescentReport {
    pub audit: DescentAudit,
    pub tolerance: f64,
    pub verdict: Verdict,
}

/// Deterministic smoothed (or minimal-norm) flow from the config, audited
/// against the integrated descent inequality.
pub fn run_descent_audit(cfg: &RunConfig) -> Result<DescentReport> {
    let problem = build_problem(&cfg.problem)?;
    let mut flow = cfg.flow_config(&problem)?;
    flow.noise = false;
    let path = simulate(FlowKind::Flow, &problem, &flow)?;
    if let Some(step) = path.diverged_at {
        return Err(Error::Divergence {
            step,
            what: "flow diverged".into(),
        });
    }
    let objective = match flow.mode {
        crate::dynamics::FlowMode::Smoothed => AuditObjective::Smoothed,
        crate::dynamics::FlowMode::MinimalNorm => AuditObjective::Nonsmooth,
    };
    let audit = descent_audit(&path, objective);
    let tolerance = cfg.audit.descent_tolerance * (1.0 + audit.initial_value.abs());
    let verdict = if audit.max_violation <= tolerance { Verdict::Pass } else { Verdict::Fail };
    Ok(DescentReport {
        audit,
        tolerance,
        verdict,
    })
}

pub fn run_energy_audit(cfg: &RunConfig, jobs: usize) -> Result<EnergyGap> {
    let problem = build_problem(&cfg.problem)?;
    if cfg.ensemble < 64 {
        return Err(Error::Config(format!(
            "energy audit needs an ensemble of at least 64 paths, got {}",
            cfg.ensemble
        )));
    }
    let paths = simulate_ensemble(cfg, &problem, FlowKind::Sde1, jobs)?;
    let horizon = cfg.flow_config(&problem)?.horizon;
    energy_identity_gap(
        &paths,
        cfg.audit.t1,
        cfg.audit.t2.unwrap_or(horizon),
        cfg.audit.energy_tolerance,
        cfg.audit.bootstrap_seed,
    )
}

pub fn run_lyapunov_audit(cfg: &RunConfig, jobs: usize) -> Result<LyapunovAudit> {
    let problem = build_problem(&cfg.problem)?;
    let flow = cfg.flow_config(&problem)?;
    let paths = simulate_ensemble(cfg, &problem, FlowKind::Sde2, jobs)?;
    let constants = choose_c(flow.lambda, flow.gamma, problem.smoothness());
    lyapunov_audit(
        &paths,
        &problem,
        &flow,
        constants,
        cfg.audit.lyapunov_stride,
        cfg.audit.se_multiplier,
        cfg.audit.bootstrap_seed,
    )
}

/// Member 0 of the configured run, objective series `(t, H_mu)`.
fn objective_series(cfg: &RunConfig, problem: &CompositeProblem) -> Result<(Vec<f64>, Vec<f64>, DVector<f64>)> {
    match run_member(cfg, problem, 0)? {
        MemberOutput::Algorithm(t) => {
            t.check()?;
            Ok((
                t.records.iter().map(|r| r.t).collect(),
                t.records.iter().map(|r| r.h_mu).collect(),
                t.final_state.x,
            ))
        }
        MemberOutput::Path(p) => {
            if let Some(step) = p.diverged_at {
                return Err(Error::Divergence {
                    step,
                    what: "path diverged".into(),
                });
            }
            let last = p.states.last().cloned().expect("paths hold the initial state");
            Ok((p.times, p.h_mu, last))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub h_bar: f64,
    pub fit: RateFit,
}

pub fn run_rate_fit(cfg: &RunConfig) -> Result<RateReport> {
    let problem = build_problem(&cfg.problem)?;
    let (times, values, _) = objective_series(cfg, &problem)?;
    let (t, gaps, h_bar) = objective_gaps(&times, &values);
    Ok(RateReport {
        h_bar,
        fit: rate_fit(&t, &gaps, h_bar)?,
    })
}

pub fn run_criticality(cfg: &RunConfig) -> Result<CriticalityReport> {
    let problem = build_problem(&cfg.problem)?;
    let (_, _, x) = objective_series(cfg, &problem)?;
    criticality_report(&problem, &x)
}

pub fn run_weak_order(cfg: &RunConfig) -> Result<Vec<WeakErrorTable>> {
    let problem = build_problem(&cfg.problem)?;
    let mut wc = cfg
        .weak_order
        .clone()
        .ok_or_else(|| Error::Config("weak-order needs a `weak_order` section".into()))?;
    wc.master_seed = cfg.master_seed;
    if wc.x0.is_none() {
        wc.x0 = cfg.problem.x0.clone();
    }
    weak_error(&problem, &wc)
}

/// Everything a report can collate; absent entries become explicit gaps.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Analyses {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub descent: Option<DescentReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub energy: Option<EnergyGap>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lyapunov: Option<LyapunovAudit>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rate: Option<RateReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub criticality: Option<CriticalityReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weak_order: Option<Vec<WeakErrorTable>>,
}

/// File names the CLI uses for each analysis inside an output directory.
pub const ANALYSIS_FILES: [(&str, &str); 6] = [
    ("descent", "descent.json"),
    ("energy", "energy.json"),
    ("lyapunov", "lyapunov.json"),
    ("rate", "rate_fit.json"),
    ("criticality", "criticality.json"),
    ("weak_order", "weak_order.json"),
];

impl Analyses {
    /// Loads whichever analysis files exist in `dir`.
    pub fn load_dir(dir: &Path) -> Result<Self> {
        let mut a = Analyses::default();
        let read = |name: &str| -> Result<Option<String>> {
            let p = dir.join(name);
            if p.exists() {
                Ok(Some(fs::read_to_string(p)?))
            } else {
                Ok(None)
            }
        };
        if let Some(t) = read("descent.json")? {
            a.descent = Some(serde_json::from_str(&t)?);
        }
        if let Some(t) = read("energy.json")? {
            a.energy = Some(serde_json::from_str(&t)?);
        }
        if let Some(t) = read("lyapunov.json")? {
            a.lyapunov = Some(serde_json::from_str(&t)?);
        }
        if let Some(t) = read("rate_fit.json")? {
            a.rate = Some(serde_json::from_str(&t)?);
        }
        if let Some(t) = read("criticality.json")? {
            a.criticality = Some(serde_json::from_str(&t)?);
        }
        if let Some(t) = read("weak_order.json")? {
            a.weak_order = Some(serde_json::from_str(&t)?);
        }
        Ok(a)
    }

    fn is_empty(&self) -> bool {
        self == &Analyses::default()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub schema_version: u32,
    pub code_version: String,
    /// `no-analyses`, `complete` or `partial`.
    pub status: String,
    pub verdicts: BTreeMap<String, Verdict>,
    pub gaps: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub manifest_status: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub derived: Option<DerivedConstants>,
    pub analyses: Analyses,
}

/// Collates verdicts into a summary. Weak-order tables pass when every
/// slope lies in `[-1.4, -0.6]` and no row is flagged.
pub fn summarize(manifest: Option<&RunManifest>, analyses: &Analyses) -> Summary {
    let mut verdicts = BTreeMap::new();
    let mut gaps = Vec::new();
    let mut note = |name: &str, v: Option<Verdict>| match v {
        Some(v) => {
            verdicts.insert(name.to_string(), v);
        }
        None => gaps.push(name.to_string()),
    };
    note("descent", analyses.descent.as_ref().map(|d| d.verdict));
    note("energy", analyses.energy.as_ref().map(|e| e.verdict));
    note("lyapunov", analyses.lyapunov.as_ref().map(|l| l.verdict));
    note(
        "rate",
        analyses.rate.as_ref().map(|r| if r.fit.regime_mismatch { Verdict::Fail } else { Verdict::Pass }),
    );
    note(
        "criticality",
        analyses
            .criticality
            .as_ref()
            .map(|c| if c.pass { Verdict::Pass } else { Verdict::Fail }),
    );
    note(
        "weak_order",
        analyses.weak_order.as_ref().map(|tables| {
            if tables.iter().any(|t| t.rows.iter().any(|r| r.flagged)) {
                Verdict::Inconclusive
            } else if tables.iter().all(|t| (-1.4..=-0.6).contains(&t.slope)) {
                Verdict::Pass
            } else {
                Verdict::Fail
            }
        }),
    );
    let status = if analyses.is_empty() {
        "no-analyses"
    } else if gaps.is_empty() {
        "complete"
    } else {
        "partial"
    };
    Summary {
        schema_version: SCHEMA_VERSION,
        code_version: CODE_VERSION.into(),
        status: status.into(),
        verdicts,
        gaps,
        manifest_status: manifest.map(|m| m.status.clone()),
        derived: manifest.map(|m| m.derived.clone()),
        analyses: analyses.clone(),
    }
}

/// Gnuplot data file: one `# name` block per series, blocks separated by
/// two blank lines so `index` selects them.
pub fn plot_data(analyses: &Analyses) -> String {
    let mut blocks: Vec<(String, Vec<(f64, f64)>)> = Vec::new();
    if let Some(l) = &analyses.lyapunov {
        let s = &l.series;
        blocks.push(("lyapunov_mean".into(), s.times.iter().copied().zip(s.values.iter().copied()).collect()));
    }
    if let Some(tables) = &analyses.weak_order {
        for t in tables {
            let name = format!("weak_error_{}", serde_json::to_value(t.test_function).unwrap().as_str().unwrap_or("g"));
            blocks.push((name, t.rows.iter().map(|r| (r.rho, r.max_error)).collect()));
        }
    }
    let mut out = String::new();
    for (i, (name, points)) in blocks.iter().enumerate() {
        if i > 0 {
            out.push_str("\n\n");
        }
        out.push_str(&format!("# {name}\n"));
        for (x, y) in points {
            out.push_str(&format!("{x:e} {y:e}\n"));
        }
    }
    out
}

/// Writes `summary.json` and `plot.dat` to `dir`.
pub fn report(manifest: Option<&RunManifest>, analyses: &Analyses, dir: &Path) -> Result<Summary> {
    let summary = summarize(manifest, analyses);
    fs::create_dir_all(dir)?;
    write_json(&dir.join("summary.json"), &summary)?;
    fs::write(dir.join("plot.dat"), plot_data(analyses))?;
    Ok(summary)
}
