//! Audits of the descent, energy and Lyapunov inequalities along sampled
//! paths, rate fitting, and epsilon-criticality certificates.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::dynamics::{FlowConfig, FlowKind, SampledPath};
use crate::error::{Error, Result};
use crate::problems::CompositeProblem;
use crate::rng::{Purpose, Stream};
use crate::stats::{bootstrap_se, fit_line, mean, pairwise_sum, variance};

pub const BOOTSTRAP_RESAMPLES: usize = 1000;

/// Outcome of a statistical check.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    Inconclusive,
}

/// Which objective a deterministic path is audited against.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AuditObjective {
    /// `H_mu` with the stored residual `||grad H_mu||`.
    #[default]
    Smoothed,
    /// `H` with the stored residual (meaningful for minimal-norm flows).
    Nonsmooth,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DescentAudit {
    /// `max_i [H(t_{i+1}) + lambda^{-1} int ||r||^2 - H(t_i)]`, trapezoid rule.
    pub max_violation: f64,
    /// Record index `i` attaining the maximum.
    pub at: usize,
    /// `H` at the first record, for scaling tolerances.
    pub initial_value: f64,
}

/// Checks the integrated descent inequality between consecutive records.
pub fn descent_audit(path: &SampledPath, objective: AuditObjective) -> DescentAudit {
    let values = match objective {
        AuditObjective::Smoothed => &path.h_mu,
        AuditObjective::Nonsmooth => &path.h,
    };
    let mut out = DescentAudit {
        max_violation: f64::NEG_INFINITY,
        at: 0,
        initial_value: values.first().copied().unwrap_or(f64::NAN),
    };
    for i in 0..values.len().saturating_sub(1) {
        let dt = path.times[i + 1] - path.times[i];
        let r = &path.residual;
        let integral = 0.5 * dt * (r[i] * r[i] + r[i + 1] * r[i + 1]);
        let v = values[i + 1] + integral / path.lambda - values[i];
        if v > out.max_violation {
            out.max_violation = v;
            out.at = i;
        }
    }
    if out.max_violation == f64::NEG_INFINITY {
        out.max_violation = 0.0;
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyGap {
    pub t1: f64,
    pub t2: f64,
    pub paths: usize,
    /// `E[H_mu(x(t2))] + lambda E[int ||x'||^2]`.
    pub lhs: f64,
    /// `E[H_mu(x(t1))]`.
    pub rhs: f64,
    /// `|lhs - rhs| / (1 + |rhs|)`.
    pub gap: f64,
    pub std_error: f64,
    pub tolerance: f64,
    pub verdict: Verdict,
}

fn record_index(path: &SampledPath, t: f64) -> Result<usize> {
    let i = (t / path.dt).round();
    if !(i >= 0.0) || i as usize >= path.times.len() {
        return Err(Error::Usage(format!(
            "time {t} is outside the sampled range [0, {}]",
            path.times.last().copied().unwrap_or(0.0)
        )));
    }
    Ok(i as usize)
}

fn check_ensemble(paths: &[SampledPath], kind: FlowKind, min: usize) -> Result<()> {
    if paths.len() < min {
        return Err(Error::InsufficientData(format!("need at least {min} paths, got {}", paths.len())));
    }
    if let Some(p) = paths.iter().find(|p| p.kind != kind) {
        return Err(Error::Usage(format!("expected {kind:?} paths, got {:?}", p.kind)));
    }
    if let Some(i) = paths.iter().position(|p| p.diverged_at.is_some()) {
        return Err(Error::Divergence {
            step: paths[i].diverged_at.unwrap(),
            what: format!("ensemble member {i} diverged"),
        });
    }
    let len = paths[0].times.len();
    if paths.iter().any(|p| p.times.len() != len || p.dt != paths[0].dt) {
        return Err(Error::Usage("ensemble paths must share the time grid".into()));
    }
    Ok(())
}

/// Drift-only velocity `(dx - noise)/dt` on step `i`.
fn drift_velocity(path: &SampledPath, i: usize) -> DVector<f64> {
    let dx = &path.states[i + 1] - &path.states[i];
    match path.noise.get(i) {
        Some(w) => (dx + w) / path.dt,
        None => dx / path.dt,
    }
}

/// Compares both sides of the stochastic energy identity
/// `E[H_mu(x(t2))] + lambda E[int_{t1}^{t2} ||x'||^2] = E[H_mu(x(t1))]`.
///
/// A standard error above the gap yields `Inconclusive`; otherwise the
/// verdict is `Pass` iff `gap <= tolerance`.
pub fn energy_identity_gap(paths: &[SampledPath], t1: f64, t2: f64, tolerance: f64, seed: u64) -> Result<EnergyGap> {
    check_ensemble(paths, FlowKind::Sde1, 2)?;
    if t2 < t1 {
        return Err(Error::Usage(format!("t1 = {t1} must not exceed t2 = {t2}")));
    }
    let i1 = record_index(&paths[0], t1)?;
    let i2 = record_index(&paths[0], t2)?;
    let lambda = paths[0].lambda;
    let dt = paths[0].dt;
    let start: Vec<f64> = paths.iter().map(|p| p.h_mu[i1]).collect();
    let end: Vec<f64> = paths
        .iter()
        .map(|p| {
            let kinetic: Vec<f64> = (i1..i2).map(|i| drift_velocity(p, i).norm_squared() * dt).collect();
            p.h_mu[i2] + lambda * pairwise_sum(&kinetic)
        })
        .collect();
    let gap_of = |idx: Option<&[usize]>| {
        let (l, r) = match idx {
            None => (mean(&end), mean(&start)),
            Some(idx) => {
                let l: Vec<f64> = idx.iter().map(|&i| end[i]).collect();
                let r: Vec<f64> = idx.iter().map(|&i| start[i]).collect();
                (mean(&l), mean(&r))
            }
        };
        ((l - r).abs() / (1.0 + r.abs()), l, r)
    };
    let (gap, lhs, rhs) = gap_of(None);
    let std_error = if i1 == i2 {
        0.0
    } else {
        bootstrap_se(paths.len(), BOOTSTRAP_RESAMPLES, seed, |idx| gap_of(Some(idx)).0)
    };
    let verdict = if std_error > gap {
        Verdict::Inconclusive
    } else if gap <= tolerance {
        Verdict::Pass
    } else {
        Verdict::Fail
    };
    Ok(EnergyGap {
        t1,
        t2,
        paths: paths.len(),
        lhs,
        rhs,
        gap,
        std_error,
        tolerance,
        verdict,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LyapunovConstants {
    pub c: f64,
    pub a: f64,
    pub b: f64,
}

/// `c = min{2 lambda / L, (sqrt(L^2 + 2 lambda gamma L) - L) / L} / 2`, with
/// `a = lambda gamma - c L - c^2 L / 2` and `b = c lambda - c^2 L / 2`.
pub fn choose_c(lambda: f64, gamma: f64, l: f64) -> LyapunovConstants {
    assert!(lambda > 0.0 && gamma > 0.0 && l > 0.0, "choose_c needs positive inputs");
    let upper = (2.0 * lambda / l).min(((l * l + 2.0 * lambda * gamma * l).sqrt() - l) / l);
    let c = 0.5 * upper;
    let a = lambda * gamma - c * l - 0.5 * c * c * l;
    let b = c * lambda - 0.5 * c * c * l;
    assert!(a > 0.0 && b > 0.0, "choose_c produced a = {a}, b = {b}");
    LyapunovConstants { c, a, b }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LyapunovSeries {
    pub c: f64,
    pub a: f64,
    pub b: f64,
    pub times: Vec<f64>,
    /// Ensemble mean of `L_mu(p, q)`.
    pub values: Vec<f64>,
    /// Bootstrap standard error of each increment `values[j+1] - values[j]`.
    pub increment_se: Vec<f64>,
    /// Ensemble means of `||x'||^2` and of the drift-only `||x''||^2`; the
    /// acceleration series has no entry at the final record.
    pub velocity_sq: Vec<f64>,
    pub acceleration_sq: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LyapunovAudit {
    pub series: LyapunovSeries,
    pub se_multiplier: f64,
    /// `max_j (increment_j - se_multiplier * se_j)`.
    pub worst_excess: f64,
    pub strictly_decreasing: bool,
    pub verdict: Verdict,
}

/// `L_mu(p, q) = H_mu(p) + (lambda/2) ||p - q||^2` with `p = c v + x` and
/// `q = (c + sqrt(1 + c gamma + c alpha / max(t, t_min))) v + x`.
pub fn lyapunov_value(problem: &CompositeProblem, cfg: &FlowConfig, c: f64, t: f64, x: &DVector<f64>, v: &DVector<f64>) -> f64 {
    let s = (1.0 + c * cfg.gamma + c * cfg.alpha / t.max(cfg.t_min())).sqrt();
    let p = c * v + x;
    problem.h_mu_unchecked(&p) + 0.5 * cfg.lambda * s * s * v.norm_squared()
}

/// Evaluates the Lyapunov function every `stride` records and checks that
/// each increment of the ensemble mean is at most `se_multiplier` bootstrap
/// standard errors above zero.
pub fn lyapunov_audit(
    paths: &[SampledPath],
    problem: &CompositeProblem,
    cfg: &FlowConfig,
    constants: LyapunovConstants,
    stride: usize,
    se_multiplier: f64,
    seed: u64,
) -> Result<LyapunovAudit> {
    check_ensemble(paths, FlowKind::Sde2, 1)?;
    if stride == 0 {
        return Err(Error::Usage("stride must be positive".into()));
    }
    let len = paths[0].times.len();
    let picks: Vec<usize> = (0..len).step_by(stride).collect();
    let times: Vec<f64> = picks.iter().map(|&i| paths[0].times[i]).collect();
    let c = constants.c;
    // values[path][j]
    let per_path: Vec<Vec<f64>> = paths
        .iter()
        .map(|p| picks.iter().map(|&i| lyapunov_value(problem, cfg, c, p.times[i], &p.states[i], &p.velocities[i])).collect())
        .collect();
    let column = |j: usize| -> Vec<f64> { per_path.iter().map(|row| row[j]).collect() };
    let values: Vec<f64> = (0..picks.len()).map(|j| mean(&column(j))).collect();
    let velocity_sq: Vec<f64> = picks
        .iter()
        .map(|&i| mean(&paths.iter().map(|p| p.velocities[i].norm_squared()).collect::<Vec<_>>()))
        .collect();
    let acceleration_sq: Vec<f64> = picks
        .iter()
        .filter(|&&i| i + 1 < len)
        .map(|&i| {
            let a: Vec<f64> = paths
                .iter()
                .map(|p| {
                    let dv = &p.velocities[i + 1] - &p.velocities[i];
                    let drift = match p.noise.get(i) {
                        Some(w) => dv + w,
                        None => dv,
                    };
                    drift.norm_squared() / (p.dt * p.dt)
                })
                .collect();
            mean(&a)
        })
        .collect();

    let increments: Vec<Vec<f64>> = per_path
        .iter()
        .map(|row| row.windows(2).map(|w| w[1] - w[0]).collect())
        .collect();
    let increment_se = increment_bootstrap(&increments, picks.len().saturating_sub(1), seed);

    let mut worst_excess = f64::NEG_INFINITY;
    let mut strictly_decreasing = true;
    for j in 0..increment_se.len() {
        let inc = values[j + 1] - values[j];
        worst_excess = worst_excess.max(inc - se_multiplier * increment_se[j]);
        strictly_decreasing &= inc < 0.0;
    }
    if increment_se.is_empty() {
        worst_excess = 0.0;
    }
    let verdict = if worst_excess <= 0.0 { Verdict::Pass } else { Verdict::Fail };
    Ok(LyapunovAudit {
        series: LyapunovSeries {
            c,
            a: constants.a,
            b: constants.b,
            times,
            values,
            increment_se,
            velocity_sq,
            acceleration_sq,
        },
        se_multiplier,
        worst_excess,
        strictly_decreasing,
        verdict,
    })
}

/// Bootstrap standard errors of the ensemble-mean increment, one per column,
/// sharing each resample across columns.
fn increment_bootstrap(increments: &[Vec<f64>], columns: usize, seed: u64) -> Vec<f64> {
    let m = increments.len();
    if m < 2 {
        return vec![0.0; columns];
    }
    let mut draws = vec![vec![0.0; BOOTSTRAP_RESAMPLES]; columns];
    let mut idx = vec![0usize; m];
    let mut buf = vec![0.0; m];
    for b in 0..BOOTSTRAP_RESAMPLES {
        let mut s = Stream::new(seed, Purpose::Bootstrap, b as u64);
        for slot in idx.iter_mut() {
            *slot = s.below(m);
        }
        for (j, col) in draws.iter_mut().enumerate() {
            for (k, &i) in idx.iter().enumerate() {
                buf[k] = increments[i][j];
            }
            col[b] = mean(&buf);
        }
    }
    draws.iter().map(|d| variance(d).sqrt()).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateModel {
    /// `gap = amplitude * exp(-rate * t)`.
    Exponential,
    /// `gap = amplitude * t^exponent`.
    Power,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub model: RateModel,
    pub amplitude: f64,
    /// `b_1` for the exponential model, `p` for the power model.
    pub parameter: f64,
    /// `0.5` marks the exponential regime; `(1 - 1/p)/2` for power laws.
    pub theta_hat: f64,
    pub r_squared: f64,
    pub window: (f64, f64),
    pub points: usize,
    /// Power model selected with `p >= -1`, outside the KL power regime.
    pub regime_mismatch: bool,
    /// The competing model's `r^2`, when it could be fitted.
    pub alternative_r_squared: Option<f64>,
}

pub const MIN_FIT_POINTS: usize = 10;

/// `p = 1 / (1 - 2 theta)`.
pub fn theta_to_exponent(theta: f64) -> f64 {
    1.0 / (1.0 - 2.0 * theta)
}

pub fn exponent_to_theta(p: f64) -> f64 {
    0.5 * (1.0 - 1.0 / p)
}

/// Fits `log(gap)` against `t` and against `log t` and keeps the better fit.
///
/// The window runs from the first sample up to the first gap at or below
/// `1e3 * eps * (1 + |h_bar|)`; the power fit additionally drops `t <= 0`.
pub fn rate_fit(times: &[f64], gaps: &[f64], h_bar: f64) -> Result<RateFit> {
    if times.len() != gaps.len() {
        return Err(Error::Dimension {
            what: "rate_fit gaps".into(),
            expected: times.len(),
            got: gaps.len(),
        });
    }
    let floor = 1e3 * f64::EPSILON * (1.0 + h_bar.abs());
    let end = gaps.iter().position(|&g| !(g > floor)).unwrap_or(gaps.len());
    let (t, g) = (&times[..end], &gaps[..end]);
    if t.len() < MIN_FIT_POINTS {
        return Err(Error::InsufficientData(format!(
            "rate fit needs at least {MIN_FIT_POINTS} points above the floor, got {}",
            t.len()
        )));
    }
    let log_g: Vec<f64> = g.iter().map(|v| v.ln()).collect();
    let exp_fit = fit_line(t, &log_g);

    let positive: Vec<usize> = (0..t.len()).filter(|&i| t[i] > 0.0).collect();
    let power_fit = (positive.len() >= MIN_FIT_POINTS).then(|| {
        let lt: Vec<f64> = positive.iter().map(|&i| t[i].ln()).collect();
        let lg: Vec<f64> = positive.iter().map(|&i| log_g[i]).collect();
        fit_line(&lt, &lg)
    });

    let window = (t[0], t[t.len() - 1]);
    match power_fit {
        Some(pf) if pf.r_squared > exp_fit.r_squared => {
            let p = pf.slope;
            Ok(RateFit {
                model: RateModel::Power,
                amplitude: pf.intercept.exp(),
                parameter: p,
                theta_hat: exponent_to_theta(p),
                r_squared: pf.r_squared,
                window: (t[positive[0]], window.1),
                points: positive.len(),
                regime_mismatch: p >= -1.0,
                alternative_r_squared: Some(exp_fit.r_squared),
            })
        }
        _ => Ok(RateFit {
            model: RateModel::Exponential,
            amplitude: exp_fit.intercept.exp(),
            parameter: -exp_fit.slope,
            theta_hat: 0.5,
            r_squared: exp_fit.r_squared,
            window,
            points: t.len(),
            regime_mismatch: false,
            alternative_r_squared: power_fit.map(|f| f.r_squared),
        }),
    }
}

/// Objective gaps `H(t) - H_bar` with `H_bar` the minimum of `values`; the
/// last 5% of records are excluded from the returned series.
pub fn objective_gaps(times: &[f64], values: &[f64]) -> (Vec<f64>, Vec<f64>, f64) {
    let h_bar = values.iter().copied().fold(f64::INFINITY, f64::min);
    let keep = values.len() - values.len() / 20;
    let gaps = values[..keep].iter().map(|v| v - h_bar).collect();
    (times[..keep].to_vec(), gaps, h_bar)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriticalityReport {
    /// `||grad H_mu(x_final)||`.
    pub resid_smoothed: f64,
    pub x_bar: Vec<f64>,
    /// `dist(0, dH(x_bar))`.
    pub resid_at_x_bar: f64,
    /// `L_f L_h mu / sqrt(lambda_min(A A^T))`.
    pub bound: f64,
    /// Slack for a nonzero smoothed residual:
    /// `dist(0, dH(x_bar)) <= ||grad H_mu(x)|| + bound`.
    pub tol_stat: f64,
    pub pass: bool,
}

pub fn criticality_report(problem: &CompositeProblem, x_final: &DVector<f64>) -> Result<CriticalityReport> {
    let bound = problem.eps_criticality_bound()?;
    let resid_smoothed = problem.grad_h_mu(x_final)?.norm();
    let x_bar = problem.lift_point(x_final)?;
    let resid_at_x_bar = problem.subgrad_residual(&x_bar)?.achieved;
    let tol_stat = resid_smoothed;
    Ok(CriticalityReport {
        resid_smoothed,
        x_bar: x_bar.iter().copied().collect(),
        resid_at_x_bar,
        bound,
        tol_stat,
        pass: resid_at_x_bar <= bound + tol_stat,
    })
}
