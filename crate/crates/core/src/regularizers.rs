//! Weakly convex separable regularizers (ℓ1, MCP, SCAD), their proximal
//! maps and Moreau envelopes.
//!
//! All three penalties are symmetric, nondecreasing in `|t|` and piecewise
//! quadratic, which is what makes every prox here exact.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

/// Scalar penalty applied to every coordinate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Penalty {
    L1 { weight: f64 },
    /// Minimax concave penalty with concavity parameter `gamma`.
    Mcp { weight: f64, gamma: f64 },
    /// Smoothly clipped absolute deviation with shape `a > 2`.
    Scad { weight: f64, a: f64 },
}

/// Config form: `{"kind": "l1"|"mcp"|"scad", "weight": w, "shape": s}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegularizerSpec {
    pub kind: PenaltyKind,
    pub weight: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shape: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PenaltyKind {
    L1,
    Mcp,
    Scad,
}

impl RegularizerSpec {
    pub fn to_penalty(&self) -> Result<Penalty> {
        let p = match self.kind {
            PenaltyKind::L1 => Penalty::L1 { weight: self.weight },
            PenaltyKind::Mcp => Penalty::Mcp {
                weight: self.weight,
                gamma: self.shape.unwrap_or(3.0),
            },
            PenaltyKind::Scad => Penalty::Scad {
                weight: self.weight,
                a: self.shape.unwrap_or(3.7),
            },
        };
        p.validate()?;
        Ok(p)
    }
}

impl Penalty {
    pub fn validate(&self) -> Result<()> {
        let w = self.weight();
        if !(w >= 0.0) || !w.is_finite() {
            return Err(Error::Config(format!("regularizer weight must be finite and >= 0, got {w}")));
        }
        match *self {
            Penalty::L1 { .. } => Ok(()),
            Penalty::Mcp { gamma, .. } if gamma > 0.0 && gamma.is_finite() => Ok(()),
            Penalty::Mcp { gamma, .. } => Err(Error::Config(format!("mcp shape must be > 0, got {gamma}"))),
            Penalty::Scad { a, .. } if a > 2.0 && a.is_finite() => Ok(()),
            Penalty::Scad { a, .. } => Err(Error::Config(format!("scad shape must be > 2, got {a}"))),
        }
    }

    pub fn weight(&self) -> f64 {
        match *self {
            Penalty::L1 { weight } | Penalty::Mcp { weight, .. } | Penalty::Scad { weight, .. } => weight,
        }
    }

    /// Weak-convexity modulus: `p + (modulus/2) t^2` is convex.
    pub fn modulus(&self) -> f64 {
        match *self {
            Penalty::L1 { .. } => 0.0,
            Penalty::Mcp { gamma, .. } => 1.0 / gamma,
            Penalty::Scad { a, .. } => 1.0 / (a - 1.0),
        }
    }

    pub fn value(&self, t: f64) -> f64 {
        let s = t.abs();
        match *self {
            Penalty::L1 { weight } => weight * s,
            Penalty::Mcp { weight, gamma } => {
                if s <= gamma * weight {
                    weight * s - s * s / (2.0 * gamma)
                } else {
                    0.5 * gamma * weight * weight
                }
            }
            Penalty::Scad { weight, a } => {
                if s <= weight {
                    weight * s
                } else if s <= a * weight {
                    (2.0 * a * weight * s - s * s - weight * weight) / (2.0 * (a - 1.0))
                } else {
                    0.5 * (a + 1.0) * weight * weight
                }
            }
        }
    }

    /// Derivative of the penalty on `t > 0` (the penalty is C^1 away from 0).
    fn slope(&self, s: f64) -> f64 {
        match *self {
            Penalty::L1 { weight } => weight,
            Penalty::Mcp { weight, gamma } => (weight - s / gamma).max(0.0),
            Penalty::Scad { weight, a } => {
                if s <= weight {
                    weight
                } else {
                    ((a * weight - s) / (a - 1.0)).max(0.0)
                }
            }
        }
    }

    /// Second derivative on `t > 0` away from breakpoints.
    fn curvature(&self, s: f64) -> f64 {
        match *self {
            Penalty::L1 { .. } => 0.0,
            Penalty::Mcp { weight, gamma } if s < gamma * weight => -1.0 / gamma,
            Penalty::Scad { weight, a } if s > weight && s < a * weight => -1.0 / (a - 1.0),
            _ => 0.0,
        }
    }

    /// Clarke subdifferential at `t` as a closed interval.
    pub fn subdifferential(&self, t: f64) -> (f64, f64) {
        if t == 0.0 {
            let w = self.weight();
            (-w, w)
        } else {
            let g = t.signum() * self.slope(t.abs());
            (g, g)
        }
    }

    /// Union of [`Penalty::subdifferential`] over `[t - delta, t + delta]`.
    /// Only the kink at zero is set-valued; the slope is continuous elsewhere.
    pub fn subdifferential_near(&self, t: f64, delta: f64) -> (f64, f64) {
        if t.abs() <= delta {
            let w = self.weight();
            (-w, w)
        } else {
            self.subdifferential(t)
        }
    }

    /// Breakpoints of the penalty on `t > 0`.
    fn knots(&self) -> Vec<f64> {
        match *self {
            Penalty::L1 { .. } => vec![],
            Penalty::Mcp { weight, gamma } => vec![gamma * weight],
            Penalty::Scad { weight, a } => vec![weight, a * weight],
        }
    }

    /// Minimizer of `p(z) + (z - y)^2 / (2 sigma)`.
    ///
    /// Closed form while `sigma * modulus < 1`. Otherwise the subproblem may
    /// have several global minimizers and the one of smallest magnitude wins.
    pub fn prox(&self, sigma: f64, y: f64) -> f64 {
        let s = y.abs();
        let sign = y.signum();
        match *self {
            Penalty::L1 { weight } => sign * (s - sigma * weight).max(0.0),
            Penalty::Mcp { weight, gamma } if sigma < gamma => {
                if s <= sigma * weight {
                    0.0
                } else if s <= gamma * weight {
                    sign * (s - sigma * weight) / (1.0 - sigma / gamma)
                } else {
                    y
                }
            }
            Penalty::Scad { weight, a } if sigma < a - 1.0 => {
                if s <= weight * (1.0 + sigma) {
                    sign * (s - sigma * weight).max(0.0)
                } else if s <= a * weight {
                    sign * ((a - 1.0) * s - sigma * a * weight) / (a - 1.0 - sigma)
                } else {
                    y
                }
            }
            _ => sign * self.prox_by_enumeration(sigma, s),
        }
    }

    /// Global minimizer over `t >= 0` of `p(t) + (t - s)^2 / (2 sigma)` for
    /// `s >= 0`, by checking every piece's stationary point and endpoint.
    fn prox_by_enumeration(&self, sigma: f64, s: f64) -> f64 {
        let objective = |t: f64| self.value(t) + (t - s) * (t - s) / (2.0 * sigma);
        let mut candidates = vec![0.0];
        let mut edges = vec![0.0];
        edges.extend(self.knots());
        for (i, &lo) in edges.iter().enumerate() {
            let hi = edges.get(i + 1).copied().unwrap_or(f64::INFINITY);
            // Quadratic on (lo, hi): one Newton step from any interior point
            // lands on its stationary point.
            let probe = if hi.is_finite() { 0.5 * (lo + hi) } else { lo + 1.0 };
            let d0 = self.slope(probe) + (probe - s) / sigma;
            let curvature = self.curvature(probe) + 1.0 / sigma;
            if curvature > 0.0 {
                let t = probe - d0 / curvature;
                if t > lo && t < hi {
                    candidates.push(t);
                }
            }
            if hi.is_finite() {
                candidates.push(hi);
            }
        }
        candidates.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut best = candidates[0];
        let mut best_val = objective(best);
        for &t in &candidates[1..] {
            let v = objective(t);
            if v < best_val {
                best = t;
                best_val = v;
            }
        }
        best
    }

    /// Derivative of `y -> prox(sigma, y)` away from breakpoints
    /// (uniqueness regime only).
    fn prox_derivative(&self, sigma: f64, y: f64) -> f64 {
        let s = y.abs();
        match *self {
            Penalty::L1 { weight } => {
                if s <= sigma * weight {
                    0.0
                } else {
                    1.0
                }
            }
            Penalty::Mcp { weight, gamma } => {
                if s <= sigma * weight {
                    0.0
                } else if s <= gamma * weight {
                    1.0 / (1.0 - sigma / gamma)
                } else {
                    1.0
                }
            }
            Penalty::Scad { weight, a } => {
                if s <= sigma * weight {
                    0.0
                } else if s <= weight * (1.0 + sigma) {
                    1.0
                } else if s <= a * weight {
                    (a - 1.0) / (a - 1.0 - sigma)
                } else {
                    1.0
                }
            }
        }
    }

    /// Breakpoints of `y -> prox(sigma, y)` on `y > 0`.
    fn prox_knots(&self, sigma: f64) -> Vec<f64> {
        match *self {
            Penalty::L1 { weight } => vec![sigma * weight],
            Penalty::Mcp { weight, gamma } => vec![sigma * weight, gamma * weight],
            Penalty::Scad { weight, a } => vec![sigma * weight, weight * (1.0 + sigma), a * weight],
        }
    }
}

/// A separable regularizer `h(y) = sum_i p(y_i)` on `R^m`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Regularizer {
    penalty: Penalty,
    dim: usize,
}

impl Regularizer {
    pub fn new(penalty: Penalty, dim: usize) -> Result<Self> {
        penalty.validate()?;
        Ok(Regularizer { penalty, dim })
    }

    pub fn penalty(&self) -> Penalty {
        self.penalty
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn modulus(&self) -> f64 {
        self.penalty.modulus()
    }

    /// Euclidean Lipschitz constant on `R^m`: coordinate slope bound times
    /// `sqrt(m)`.
    pub fn lipschitz(&self) -> f64 {
        self.penalty.weight() * (self.dim as f64).sqrt()
    }

    pub fn value(&self, y: &DVector<f64>) -> Result<f64> {
        check_len("regularizer value: y", self.dim, y.len())?;
        Ok(self.value_unchecked(y))
    }

    pub(crate) fn value_unchecked(&self, y: &DVector<f64>) -> f64 {
        y.iter().map(|&t| self.penalty.value(t)).sum()
    }

    /// Coordinatewise prox with step `sigma`.
    pub fn prox(&self, sigma: f64, y: &DVector<f64>) -> Result<DVector<f64>> {
        check_len("regularizer prox: y", self.dim, y.len())?;
        if !(sigma > 0.0) {
            return Err(Error::Usage(format!("prox step must be positive, got {sigma}")));
        }
        Ok(self.prox_unchecked(sigma, y))
    }

    pub(crate) fn prox_unchecked(&self, sigma: f64, y: &DVector<f64>) -> DVector<f64> {
        y.map(|t| self.penalty.prox(sigma, t))
    }

    pub fn subdifferential(&self, y: &DVector<f64>) -> Vec<(f64, f64)> {
        y.iter().map(|&t| self.penalty.subdifferential(t)).collect()
    }

    pub fn subdifferential_near(&self, y: &DVector<f64>, delta: f64) -> Vec<(f64, f64)> {
        y.iter().map(|&t| self.penalty.subdifferential_near(t, delta)).collect()
    }

    pub fn envelope(&self, mu: f64) -> Result<EnvelopeView> {
        EnvelopeView::new(*self, mu)
    }
}

/// Moreau envelope `h_mu` of a regularizer, for `0 < mu < 1/modulus`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnvelopeView {
    base: Regularizer,
    mu: f64,
}

const ENVELOPE_PROX_TOL: f64 = 1e-10;
const ENVELOPE_PROX_MAX_ITER: usize = 200;

impl EnvelopeView {
    pub fn new(base: Regularizer, mu: f64) -> Result<Self> {
        let rho = base.modulus();
        if !(mu > 0.0) || !(mu * rho < 1.0) {
            return Err(Error::Config(format!(
                "smoothing must satisfy 0 < mu < 1/varrho (mu = {mu}, varrho = {rho})"
            )));
        }
        Ok(EnvelopeView { base, mu })
    }

    pub fn base(&self) -> &Regularizer {
        &self.base
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    /// Lipschitz constant of the envelope gradient, `max{1/mu, varrho/(1 - varrho mu)}`.
    pub fn smoothness(&self) -> f64 {
        let r = self.base.modulus();
        (1.0 / self.mu).max(r / (1.0 - r * self.mu))
    }

    fn scalar_value(&self, t: f64) -> f64 {
        let p = self.base.penalty.prox(self.mu, t);
        self.base.penalty.value(p) + (p - t) * (p - t) / (2.0 * self.mu)
    }

    fn scalar_grad(&self, t: f64) -> f64 {
        (t - self.base.penalty.prox(self.mu, t)) / self.mu
    }

    fn scalar_curvature(&self, t: f64) -> f64 {
        (1.0 - self.base.penalty.prox_derivative(self.mu, t)) / self.mu
    }

    pub fn value(&self, y: &DVector<f64>) -> Result<f64> {
        check_len("moreau value: y", self.base.dim, y.len())?;
        Ok(self.value_unchecked(y))
    }

    pub(crate) fn value_unchecked(&self, y: &DVector<f64>) -> f64 {
        y.iter().map(|&t| self.scalar_value(t)).sum()
    }

    /// `(y - prox(h, mu, y)) / mu`.
    pub fn grad(&self, y: &DVector<f64>) -> Result<DVector<f64>> {
        check_len("moreau grad: y", self.base.dim, y.len())?;
        Ok(self.grad_unchecked(y))
    }

    pub(crate) fn grad_unchecked(&self, y: &DVector<f64>) -> DVector<f64> {
        y.map(|t| self.scalar_grad(t))
    }

    /// Minimizer of `h_mu(z) + ||z - w||^2 / (2 sigma)`, coordinatewise.
    pub fn prox(&self, sigma: f64, w: &DVector<f64>) -> Result<DVector<f64>> {
        check_len("envelope prox: w", self.base.dim, w.len())?;
        if !(sigma > 0.0) {
            return Err(Error::Usage(format!("prox step must be positive, got {sigma}")));
        }
        let mut z = DVector::zeros(w.len());
        for (zi, &wi) in z.iter_mut().zip(w.iter()) {
            *zi = self.scalar_prox(sigma, wi)?;
        }
        Ok(z)
    }

    /// Stationarity residual `|h_mu'(z) + (z - w)/sigma|` of one coordinate.
    fn stationarity(&self, sigma: f64, w: f64, z: f64) -> f64 {
        self.scalar_grad(z) + (z - w) / sigma
    }

    fn scalar_prox(&self, sigma: f64, w: f64) -> Result<f64> {
        if w == 0.0 {
            return Ok(0.0);
        }
        let s = w.abs();
        let sign = w.signum();
        let r = self.base.modulus();
        let min_curvature = -r / (1.0 - r * self.mu);
        let t = if 1.0 / sigma + min_curvature > 0.0 {
            self.monotone_root(sigma, s)?
        } else {
            self.nonconvex_subproblem(sigma, s)
        };
        Ok(sign * t)
    }

    /// Safeguarded Newton on the increasing map
    /// `t -> h_mu'(t) + (t - s)/sigma` over the bracket `[0, s]`.
    fn monotone_root(&self, sigma: f64, s: f64) -> Result<f64> {
        let (mut lo, mut hi) = (0.0_f64, s);
        let scale = 1.0 + s / sigma;
        let mut t = s;
        let mut phi = self.stationarity(sigma, s, t);
        for _ in 0..ENVELOPE_PROX_MAX_ITER {
            if phi.abs() <= ENVELOPE_PROX_TOL * scale {
                return Ok(t);
            }
            if phi > 0.0 {
                hi = t;
            } else {
                lo = t;
            }
            if hi - lo <= f64::EPSILON * hi.abs().max(lo.abs()) {
                return Ok(t);
            }
            let d = self.scalar_curvature(t) + 1.0 / sigma;
            let newton = t - phi / d;
            t = if d > 0.0 && newton > lo && newton < hi {
                newton
            } else {
                0.5 * (lo + hi)
            };
            phi = self.stationarity(sigma, s, t);
        }
        if phi.abs() <= 1e-8 * scale {
            return Ok(t);
        }
        Err(Error::NoConvergence {
            what: "envelope prox",
            iterations: ENVELOPE_PROX_MAX_ITER,
            estimate: t,
            residual: phi.abs(),
        })
    }

    /// The envelope is piecewise quadratic, so when the subproblem is not
    /// convex the global minimizer is one of the pieces' stationary points or
    /// breakpoints. Ties go to the smaller magnitude.
    fn nonconvex_subproblem(&self, sigma: f64, s: f64) -> f64 {
        let objective = |t: f64| self.scalar_value(t) + (t - s) * (t - s) / (2.0 * sigma);
        let mut edges = vec![0.0];
        edges.extend(self.base.penalty.prox_knots(self.mu).into_iter().filter(|&k| k < s));
        edges.push(s);
        let mut candidates = edges.clone();
        for pair in edges.windows(2) {
            let (lo, hi) = (pair[0], pair[1]);
            let mid = 0.5 * (lo + hi);
            let curvature = self.scalar_curvature(mid) + 1.0 / sigma;
            if curvature > 0.0 {
                let t = mid - self.stationarity(sigma, s, mid) / curvature;
                if t > lo && t < hi {
                    candidates.push(t);
                }
            }
        }
        candidates.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut best = candidates[0];
        let mut best_val = objective(best);
        for &t in &candidates[1..] {
            let v = objective(t);
            if v < best_val {
                best = t;
                best_val = v;
            }
        }
        best
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dv(v: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(v)
    }

    const KINDS: [Penalty; 3] = [
        Penalty::L1 { weight: 1.0 },
        Penalty::Mcp { weight: 1.0, gamma: 2.0 },
        Penalty::Scad { weight: 1.0, a: 3.7 },
    ];

    /// Best point of a uniform grid on `[lo, hi]`.
    fn grid_argmin(f: impl Fn(f64) -> f64, lo: f64, hi: f64, n: usize) -> (f64, f64) {
        (0..=n)
            .map(|i| lo + (hi - lo) * i as f64 / n as f64)
            .map(|t| (t, f(t)))
            .fold((f64::NAN, f64::INFINITY), |best, c| if c.1 < best.1 { c } else { best })
    }

    #[test]
    fn values_of_simple_cases() {
        let l1 = Regularizer::new(Penalty::L1 { weight: 2.0 }, 2).unwrap();
        assert_eq!(l1.value(&dv(&[1.0, -3.0])).unwrap(), 8.0);
        for p in KINDS {
            let h = Regularizer::new(p, 3).unwrap();
            assert_eq!(h.value(&DVector::zeros(3)).unwrap(), 0.0);
        }
        let mcp = Regularizer::new(Penalty::Mcp { weight: 1.0, gamma: 2.0 }, 1).unwrap();
        assert_eq!(mcp.value(&dv(&[10.0])).unwrap(), 1.0);
    }

    #[test]
    fn mcp_saturation_matches_numerical_minimum_of_defining_integral() {
        // MCP is the integral of (w - t/gamma)_+ from 0 to |x|.
        let (w, gamma) = (1.0, 2.0);
        let n = 200_000;
        let h = 10.0 / n as f64;
        let integral: f64 = (0..n)
            .map(|i| {
                let t = (i as f64 + 0.5) * h;
                (w - t / gamma).max(0.0) * h
            })
            .sum();
        assert!((integral - 1.0).abs() < 1e-9);
    }

    #[test]
    fn prox_examples() {
        let l1 = Penalty::L1 { weight: 1.0 };
        assert_eq!(l1.prox(1.0, 2.0), 1.0);
        let (t, _) = grid_argmin(|z| z.abs() + (z - 2.0).powi(2) / 2.0, -1.0, 3.0, 400_000);
        assert!((t - 1.0).abs() < 1e-4);

        let mcp = Penalty::Mcp { weight: 1.0, gamma: 2.0 };
        assert_eq!(mcp.prox(0.5, 3.0), 3.0);
        let (t, _) = grid_argmin(|z| mcp.value(z) + (z - 3.0).powi(2), 0.0, 5.0, 50_000);
        assert!((t - 3.0).abs() <= 1e-4);
        for p in KINDS {
            assert_eq!(p.prox(0.3, 0.0), 0.0);
        }
    }

    #[test]
    fn closed_forms_agree_with_enumeration_in_uniqueness_regime() {
        for p in KINDS {
            for &sigma in &[0.1, 0.5, 0.9] {
                for i in 0..400 {
                    let y = -6.0 + 12.0 * i as f64 / 399.0;
                    let closed = p.prox(sigma, y);
                    let enumerated = y.signum() * p.prox_by_enumeration(sigma, y.abs());
                    assert!((closed - enumerated).abs() < 1e-9, "{p:?} sigma={sigma} y={y}");
                }
            }
        }
    }

    #[test]
    fn each_piecewise_branch_matches_grid_oracle() {
        // One probe per branch of each closed form.
        let cases: [(Penalty, f64, &[f64]); 3] = [
            (Penalty::L1 { weight: 1.0 }, 0.5, &[0.2, 1.5]),
            (Penalty::Mcp { weight: 1.0, gamma: 2.0 }, 0.5, &[0.3, 1.2, 2.5]),
            (Penalty::Scad { weight: 1.0, a: 3.7 }, 0.5, &[0.3, 1.2, 2.0, 4.5]),
        ];
        for (p, sigma, ys) in cases {
            for &y in ys {
                let obj = |z: f64| p.value(z) + (z - y).powi(2) / (2.0 * sigma);
                let (g, gv) = grid_argmin(obj, -1.0, 6.0, 70_000);
                let z = p.prox(sigma, y);
                assert!(obj(z) <= gv + 1e-12, "{p:?} y={y}");
                assert!((z - g).abs() <= 2e-4, "{p:?} y={y}: {z} vs {g}");
            }
        }
    }

    #[test]
    fn nonconvex_subproblem_breaks_ties_toward_zero() {
        // sigma = gamma: on [0, gamma w] the objective is linear in t.
        let mcp = Penalty::Mcp { weight: 1.0, gamma: 1.0 };
        // With y = gamma w / 2... the objective at 0 is y^2/2 and at y it is p(y).
        let y = 1.0;
        let z = mcp.prox(1.0, y);
        let obj = |t: f64| mcp.value(t) + (t - y).powi(2) / 2.0;
        assert!((obj(0.0) - obj(1.0)).abs() < 1e-15);
        assert_eq!(z, 0.0);
        // Large sigma: hard-threshold behaviour, still a global minimizer.
        for i in 0..200 {
            let y = 0.05 * i as f64;
            let z = mcp.prox(3.0, y);
            let obj = |t: f64| mcp.value(t) + (t - y).powi(2) / 6.0;
            let (_, gv) = grid_argmin(obj, -1.0, 11.0, 120_000);
            assert!(obj(z) <= gv + 1e-12);
        }
    }

    #[test]
    fn lipschitz_constants() {
        let h = Regularizer::new(Penalty::Scad { weight: 0.5, a: 3.0 }, 4).unwrap();
        assert_eq!(h.lipschitz(), 1.0);
        assert_eq!(h.modulus(), 0.5);
    }

    #[test]
    fn invalid_shapes_rejected() {
        assert!(Regularizer::new(Penalty::Scad { weight: 1.0, a: 2.0 }, 1).is_err());
        assert!(Regularizer::new(Penalty::Mcp { weight: 1.0, gamma: 0.0 }, 1).is_err());
        assert!(Regularizer::new(Penalty::L1 { weight: -1.0 }, 1).is_err());
        let h = Regularizer::new(Penalty::Mcp { weight: 1.0, gamma: 2.0 }, 1).unwrap();
        assert!(h.envelope(2.0).is_err());
        assert!(h.envelope(0.0).is_err());
        assert!(h.envelope(1.9).is_ok());
    }

    #[test]
    fn envelope_examples() {
        let h = Regularizer::new(Penalty::L1 { weight: 1.0 }, 1).unwrap();
        let e = h.envelope(1.0).unwrap();
        assert_eq!(e.value(&dv(&[0.0])).unwrap(), 0.0);
        assert!((e.value(&dv(&[2.0])).unwrap() - 1.5).abs() < 1e-15);
        assert_eq!(e.grad(&dv(&[2.0])).unwrap()[0], 1.0);
        let fd = (e.value(&dv(&[2.0 + 1e-5])).unwrap() - e.value(&dv(&[2.0 - 1e-5])).unwrap()) / 2e-5;
        assert!((fd - 1.0).abs() < 1e-6);
        for p in KINDS {
            let e = Regularizer::new(p, 2).unwrap().envelope(0.4).unwrap();
            assert_eq!(e.grad(&DVector::zeros(2)).unwrap(), DVector::zeros(2));
        }
    }

    #[test]
    fn envelope_prox_examples() {
        let h = Regularizer::new(Penalty::L1 { weight: 1.0 }, 1).unwrap();
        let e = h.envelope(1.0).unwrap();
        let z = e.prox(1.0, &dv(&[3.0])).unwrap();
        let resid = e.grad(&z).unwrap()[0] + (z[0] - 3.0);
        assert!(resid.abs() <= 1e-8);
        // Huber prox: for convex h, prox_{s h_mu}(w) = w + s/(mu+s) (prox_{(mu+s) h}(w) - w).
        let expected = 3.0 + 0.5 * (h.penalty().prox(2.0, 3.0) - 3.0);
        assert!((z[0] - expected).abs() < 1e-12);
        let (g, _) = grid_argmin(|t| e.scalar_value(t) + (t - 3.0).powi(2) / 2.0, 0.0, 4.0, 400_000);
        assert!((z[0] - g).abs() < 2e-5);

        for p in KINDS {
            let e = Regularizer::new(p, 2).unwrap().envelope(0.3).unwrap();
            assert_eq!(e.prox(0.7, &DVector::zeros(2)).unwrap(), DVector::zeros(2));
            let w = dv(&[1.7, -4.2]);
            let z = e.prox(1e-8, &w).unwrap();
            assert!((z - &w).norm() < 1e-6);
        }
    }

    #[test]
    fn envelope_prox_handles_nonconvex_subproblem() {
        // Large sigma: h_mu of MCP has curvature -varrho/(1 - varrho mu) in places.
        let p = Penalty::Mcp { weight: 1.0, gamma: 1.5 };
        let e = Regularizer::new(p, 1).unwrap().envelope(0.5).unwrap();
        let sigma = 10.0;
        for i in 1..120 {
            let w = 0.05 * i as f64;
            let z = e.prox(sigma, &dv(&[w])).unwrap()[0];
            let obj = |t: f64| e.scalar_value(t) + (t - w).powi(2) / (2.0 * sigma);
            let (_, gv) = grid_argmin(obj, -1.0, 7.0, 80_000);
            assert!(obj(z) <= gv + 1e-12, "w={w}");
        }
    }
}
