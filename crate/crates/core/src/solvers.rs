//! LP-ADMM, LP-SADMM and accelerated LP-SADMM.
//!
//! All three share the linearized x-update
//! `x+ = x - (g + rho A^T (A x - z + u/rho)) / tau` and the multiplier update
//! `u+ = u + A x+ - z+`. They differ in the z-subproblem (prox of `h` or of
//! its envelope `h_mu`), the gradient oracle, and the extrapolation of the
//! accelerated variant.

use std::io::Write;
use std::time::Instant;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::operators::LinearMap;
use crate::problems::{CompositeProblem, NoiseSpec};
use crate::regularizers::{EnvelopeView, Regularizer};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    LpAdmm,
    LpSadmm,
    AccLpSadmm,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::LpAdmm => "lp_admm",
            Algorithm::LpSadmm => "lp_sadmm",
            Algorithm::AccLpSadmm => "acc_lp_sadmm",
        }
    }
}

/// Extrapolation schedule of the accelerated variant.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MomentumSchedule {
    /// `alpha_k = beta k / (k + alpha)`.
    #[default]
    Standard,
    /// `alpha_k = 0`; reduces the accelerated method to LP-SADMM.
    Off,
}

/// User-facing hyperparameters. `tau` and `eta` take documented defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverParams {
    pub rho: f64,
    #[serde(default = "default_eta")]
    pub eta: f64,
    /// Defaults to `1.01 (rho ||A^T A|| + 1/eta)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    pub mu: f64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    pub iterations: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub momentum: MomentumSchedule,
}

fn default_eta() -> f64 {
    1.0
}

fn default_alpha() -> f64 {
    3.0
}

fn default_gamma() -> f64 {
    1.0
}

impl SolverParams {
    pub fn new(rho: f64, mu: f64, iterations: usize) -> Self {
        SolverParams {
            rho,
            eta: default_eta(),
            tau: None,
            mu,
            alpha: default_alpha(),
            gamma: default_gamma(),
            iterations,
            seed: 0,
            momentum: MomentumSchedule::Standard,
        }
    }
}

/// Validated parameters plus cached derived quantities.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckedParams {
    pub algorithm: Algorithm,
    pub rho: f64,
    pub eta: f64,
    pub tau: f64,
    pub mu: f64,
    pub alpha: f64,
    pub gamma: f64,
    /// `1 - gamma / sqrt(rho)`.
    pub beta: f64,
    pub gram_norm: f64,
    /// `tau / rho`, the time-scale of the continuous limits.
    pub lambda: f64,
    pub iterations: usize,
    pub seed: u64,
    pub momentum: MomentumSchedule,
}

impl CheckedParams {
    /// Continuous time of iteration `k`: `k / rho`, or `k / sqrt(rho)` for
    /// the accelerated method.
    pub fn time_of(&self, k: usize) -> f64 {
        match self.algorithm {
            Algorithm::AccLpSadmm => k as f64 / self.rho.sqrt(),
            _ => k as f64 / self.rho,
        }
    }

    /// Momentum coefficient `alpha_k`.
    pub fn momentum_at(&self, k: usize) -> f64 {
        match self.momentum {
            MomentumSchedule::Off => 0.0,
            MomentumSchedule::Standard => self.beta * k as f64 / (k as f64 + self.alpha),
        }
    }
}

/// Checks the constraints each algorithm requires:
/// `tau > rho ||A^T A|| + 1/eta` always, `0 < mu < 1/varrho` always (the
/// diagnostics evaluate `H_mu`), and `beta > 0` for the accelerated method.
pub fn validate(params: &SolverParams, algorithm: Algorithm, a: &LinearMap, h: &Regularizer) -> Result<CheckedParams> {
    let SolverParams {
        rho,
        eta,
        mu,
        alpha,
        gamma,
        ..
    } = *params;
    if !(rho > 0.0) || !rho.is_finite() {
        return Err(Error::Config(format!("rho must be positive, got {rho}")));
    }
    if !(eta > 0.0) {
        return Err(Error::Config(format!("eta must be positive, got {eta}")));
    }
    let gram_norm = a.gram_norm();
    let threshold = rho * gram_norm + 1.0 / eta;
    let tau = params.tau.unwrap_or(1.01 * threshold);
    if !(tau > threshold) {
        return Err(Error::Config(format!(
            "tau must exceed rho*||A^T A|| + 1/eta (tau = {tau}, rho*||A^T A|| + 1/eta = {threshold})"
        )));
    }
    let varrho = h.modulus();
    if !(mu > 0.0) || !(mu * varrho < 1.0) {
        return Err(Error::Config(format!(
            "mu must satisfy 0 < mu < 1/varrho (mu = {mu}, varrho = {varrho})"
        )));
    }
    let beta = 1.0 - gamma / rho.sqrt();
    if algorithm == Algorithm::AccLpSadmm {
        if !(alpha > 0.0) || !(gamma > 0.0) {
            return Err(Error::Config(format!(
                "alpha and gamma must be positive (alpha = {alpha}, gamma = {gamma})"
            )));
        }
        if !(beta > 0.0) {
            return Err(Error::Config(format!(
                "beta = 1 - gamma/sqrt(rho) must be positive (gamma = {gamma}, rho = {rho}, beta = {beta})"
            )));
        }
    }
    Ok(CheckedParams {
        algorithm,
        rho,
        eta,
        tau,
        mu,
        alpha,
        gamma,
        beta,
        gram_norm,
        lambda: tau / rho,
        iterations: params.iterations,
        seed: params.seed,
        momentum: params.momentum,
    })
}

/// Primal, auxiliary and dual iterates. The hatted copies are only present
/// for the accelerated method.
#[derive(Clone, Debug, PartialEq)]
pub struct IterateState {
    pub k: usize,
    pub x: DVector<f64>,
    pub z: DVector<f64>,
    pub u: DVector<f64>,
    pub extrapolated: Option<Extrapolated>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Extrapolated {
    pub x: DVector<f64>,
    pub z: DVector<f64>,
    pub u: DVector<f64>,
}

impl IterateState {
    /// `(x0, A x0, 0)`; hatted copies equal the plain ones when `accelerated`.
    pub fn initial(x0: DVector<f64>, a: &LinearMap, accelerated: bool) -> Result<Self> {
        check_len("x0", a.cols(), x0.len())?;
        let z = a.forward(&x0);
        let u = DVector::zeros(a.rows());
        let extrapolated = accelerated.then(|| Extrapolated {
            x: x0.clone(),
            z: z.clone(),
            u: u.clone(),
        });
        Ok(IterateState {
            k: 0,
            x: x0,
            z,
            u,
            extrapolated,
        })
    }
}

/// The z-subproblem `argmin_z g(z) + (rho/2) ||z - w||^2`, for `g = h` or `g = h_mu`.
pub trait ZSubproblem {
    fn solve(&self, sigma: f64, w: &DVector<f64>) -> Result<DVector<f64>>;

    /// Distance from `v` to the (sub)differential of `g` at `z`.
    fn optimality_gap(&self, z: &DVector<f64>, v: &DVector<f64>) -> f64;
}

impl ZSubproblem for Regularizer {
    fn solve(&self, sigma: f64, w: &DVector<f64>) -> Result<DVector<f64>> {
        self.prox(sigma, w)
    }

    fn optimality_gap(&self, z: &DVector<f64>, v: &DVector<f64>) -> f64 {
        self.subdifferential(z)
            .iter()
            .zip(v.iter())
            .map(|(&(lo, hi), &vi)| {
                let d = vi - vi.clamp(lo, hi);
                d * d
            })
            .sum::<f64>()
            .sqrt()
    }
}

impl ZSubproblem for EnvelopeView {
    fn solve(&self, sigma: f64, w: &DVector<f64>) -> Result<DVector<f64>> {
        self.prox(sigma, w)
    }

    fn optimality_gap(&self, z: &DVector<f64>, v: &DVector<f64>) -> f64 {
        (self.grad_unchecked(z) - v).norm()
    }
}

/// Diagnostics produced by one step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepReport {
    /// Optimality residual of the z-update,
    /// `dist(rho (A x+ - z+ + u/rho), dg(z+))`.
    pub resid_zopt: f64,
}

fn linearized_x_update(
    x: &DVector<f64>,
    z: &DVector<f64>,
    u: &DVector<f64>,
    grad: &DVector<f64>,
    a: &LinearMap,
    params: &CheckedParams,
) -> DVector<f64> {
    let coupling = a.forward(x) - z + u / params.rho;
    let direction = grad + params.rho * a.adjoint(&coupling);
    x - direction / params.tau
}

/// One step of the (x, z, u) recursion from `(x, z, u)` with gradient `grad`.
fn admm_core<Z: ZSubproblem + ?Sized>(
    x: &DVector<f64>,
    z: &DVector<f64>,
    u: &DVector<f64>,
    grad: &DVector<f64>,
    a: &LinearMap,
    term: &Z,
    params: &CheckedParams,
) -> Result<(DVector<f64>, DVector<f64>, DVector<f64>, StepReport)> {
    let x_next = linearized_x_update(x, z, u, grad, a, params);
    let ax = a.forward(&x_next);
    let target = &ax + u / params.rho;
    let z_next = term.solve(1.0 / params.rho, &target)?;
    let v = params.rho * (&target - &z_next);
    let resid_zopt = term.optimality_gap(&z_next, &v);
    let u_next = u + ax - &z_next;
    Ok((x_next, z_next, u_next, StepReport { resid_zopt }))
}

/// LP-ADMM step with an arbitrary z-subproblem and exact gradients.
pub fn lp_admm_step_with<Z: ZSubproblem + ?Sized>(
    state: &IterateState,
    problem: &CompositeProblem,
    params: &CheckedParams,
    term: &Z,
) -> Result<(IterateState, StepReport)> {
    let grad = problem.f().grad(&state.x);
    let (x, z, u, report) = admm_core(&state.x, &state.z, &state.u, &grad, problem.operator(), term, params)?;
    Ok((
        IterateState {
            k: state.k + 1,
            x,
            z,
            u,
            extrapolated: None,
        },
        report,
    ))
}

/// LP-ADMM: exact gradient, z-update by the prox of `h` with step `1/rho`.
pub fn lp_admm_step(
    state: &IterateState,
    problem: &CompositeProblem,
    params: &CheckedParams,
) -> Result<(IterateState, StepReport)> {
    lp_admm_step_with(state, problem, params, problem.h())
}

/// LP-SADMM: stochastic gradient, z-update by the prox of `h_mu`.
pub fn lp_sadmm_step(
    state: &IterateState,
    problem: &CompositeProblem,
    params: &CheckedParams,
    noise: &NoiseSpec,
) -> Result<(IterateState, StepReport)> {
    let grad = problem.grad_stochastic(&state.x, noise, state.k as u64)?;
    let (x, z, u, report) = admm_core(
        &state.x,
        &state.z,
        &state.u,
        &grad,
        problem.operator(),
        problem.envelope(),
        params,
    )?;
    Ok((
        IterateState {
            k: state.k + 1,
            x,
            z,
            u,
            extrapolated: None,
        },
        report,
    ))
}

/// Accelerated LP-SADMM: the LP-SADMM step taken from the extrapolated
/// point, followed by extrapolation with `alpha_{k+1}`.
pub fn acc_lp_sadmm_step(
    state: &IterateState,
    problem: &CompositeProblem,
    params: &CheckedParams,
    noise: &NoiseSpec,
) -> Result<(IterateState, StepReport)> {
    let hat = state
        .extrapolated
        .as_ref()
        .ok_or_else(|| Error::Usage("accelerated step needs extrapolated iterates".into()))?;
    let grad = problem.grad_stochastic(&hat.x, noise, state.k as u64)?;
    let (x, z, u, report) = admm_core(
        &hat.x,
        &hat.z,
        &hat.u,
        &grad,
        problem.operator(),
        problem.envelope(),
        params,
    )?;
    let step = params.momentum_at(state.k + 1);
    let extrapolated = Extrapolated {
        u: &u + step * (&u - &state.u),
        x: &x + step * (&x - &state.x),
        z: &z + step * (&z - &state.z),
    };
    Ok((
        IterateState {
            k: state.k + 1,
            x,
            z,
            u,
            extrapolated: Some(extrapolated),
        },
        report,
    ))
}

/// Header of the trajectory CSV.
pub const TRAJECTORY_HEADER: &str = "k,t,H,H_mu,step_norm,resid_zopt,resid_grad";

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub k: usize,
    pub t: f64,
    #[serde(rename = "H")]
    pub h: f64,
    #[serde(rename = "H_mu")]
    pub h_mu: f64,
    pub step_norm: f64,
    pub resid_zopt: f64,
    pub resid_grad: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "status")]
pub enum RunStatus {
    Completed,
    Diverged { step: usize, what: String },
}

/// Output of [`run`].
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub params: CheckedParams,
    pub record_stride: usize,
    pub state_stride: usize,
    pub records: Vec<TrajectoryRecord>,
    /// Thinned copies of `x_k`.
    pub states: Vec<(usize, DVector<f64>)>,
    pub final_state: IterateState,
    pub status: RunStatus,
    pub wall_clock_seconds: f64,
}

impl Trajectory {
    /// Turns a divergence into an error.
    pub fn check(&self) -> Result<()> {
        match &self.status {
            RunStatus::Completed => Ok(()),
            RunStatus::Diverged { step, what } => Err(Error::Divergence {
                step: *step,
                what: what.clone(),
            }),
        }
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{TRAJECTORY_HEADER}")?;
        for r in &self.records {
            writeln!(
                out,
                "{},{:e},{:e},{:e},{:e},{:e},{:e}",
                r.k, r.t, r.h, r.h_mu, r.step_norm, r.resid_zopt, r.resid_grad
            )?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct RunOptions {
    pub x0: Option<DVector<f64>>,
    /// Diagnostics are recorded every `record_stride` steps (and at the end).
    pub record_stride: usize,
    /// Full states are kept every `state_stride` steps (and at the end).
    pub state_stride: usize,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            x0: None,
            record_stride: 1,
            state_stride: 100,
        }
    }
}

fn record(
    problem: &CompositeProblem,
    params: &CheckedParams,
    state: &IterateState,
    step_norm: f64,
    resid_zopt: f64,
) -> TrajectoryRecord {
    let ax = problem.operator().forward(&state.x);
    let fx = problem.f().value(&state.x);
    TrajectoryRecord {
        k: state.k,
        t: params.time_of(state.k),
        h: fx + problem.h().value_unchecked(&ax),
        h_mu: fx + problem.envelope().value_unchecked(&ax),
        step_norm,
        resid_zopt,
        resid_grad: problem.grad_h_mu_unchecked(&state.x).norm(),
    }
}

fn all_finite(state: &IterateState) -> bool {
    state.x.iter().chain(state.z.iter()).chain(state.u.iter()).all(|v| v.is_finite())
}

/// Runs `params.iterations` steps from `x0` (default zero), `z0 = A x0`,
/// `u0 = 0`.
pub fn run(
    problem: &CompositeProblem,
    params: &CheckedParams,
    noise: &NoiseSpec,
    options: &RunOptions,
) -> Result<Trajectory> {
    run_with(problem, params, noise, options, |_, _| {})
}

/// [`run`] with a callback invoked after every step.
pub fn run_with<F>(
    problem: &CompositeProblem,
    params: &CheckedParams,
    noise: &NoiseSpec,
    options: &RunOptions,
    mut on_step: F,
) -> Result<Trajectory>
where
    F: FnMut(&IterateState, &StepReport),
{
    if (params.mu - problem.mu()).abs() > 0.0 {
        return Err(Error::Usage(format!(
            "solver mu ({}) differs from the problem's smoothing level ({})",
            params.mu,
            problem.mu()
        )));
    }
    let record_stride = options.record_stride.max(1);
    let state_stride = options.state_stride.max(1);
    let started = Instant::now();
    let x0 = options.x0.clone().unwrap_or_else(|| DVector::zeros(problem.n()));
    let accelerated = params.algorithm == Algorithm::AccLpSadmm;
    let mut state = IterateState::initial(x0, problem.operator(), accelerated)?;
    let mut records = vec![record(problem, params, &state, 0.0, 0.0)];
    let mut states = vec![(0, state.x.clone())];
    let mut status = RunStatus::Completed;

    for k in 0..params.iterations {
        let stepped = match params.algorithm {
            Algorithm::LpAdmm => lp_admm_step(&state, problem, params),
            Algorithm::LpSadmm => lp_sadmm_step(&state, problem, params, noise),
            Algorithm::AccLpSadmm => acc_lp_sadmm_step(&state, problem, params, noise),
        };
        let (next, report) = match stepped {
            Ok(v) => v,
            Err(e @ Error::NoConvergence { .. }) => {
                status = RunStatus::Diverged {
                    step: k + 1,
                    what: e.to_string(),
                };
                break;
            }
            Err(e) => return Err(e),
        };
        if !all_finite(&next) {
            status = RunStatus::Diverged {
                step: k + 1,
                what: "iterate has non-finite entries".into(),
            };
            break;
        }
        let step_norm = (&next.x - &state.x).norm();
        on_step(&next, &report);
        let last = k + 1 == params.iterations;
        if next.k % record_stride == 0 || last {
            let r = record(problem, params, &next, step_norm, report.resid_zopt);
            if !(r.h.is_finite() && r.h_mu.is_finite() && r.resid_grad.is_finite()) {
                status = RunStatus::Diverged {
                    step: k + 1,
                    what: "objective overflowed".into(),
                };
                break;
            }
            records.push(r);
        }
        if next.k % state_stride == 0 || last {
            states.push((next.k, next.x.clone()));
        }
        state = next;
    }

    Ok(Trajectory {
        params: params.clone(),
        record_stride,
        state_stride,
        records,
        states,
        final_state: state,
        status,
        wall_clock_seconds: started.elapsed().as_secs_f64(),
    })
}
