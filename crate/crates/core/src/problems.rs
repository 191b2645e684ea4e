//! Composite problems `H(x) = f(x) + h(Ax)` with finite-sum smooth part.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::operators::LinearMap;
use crate::regularizers::{EnvelopeView, Penalty, Regularizer};
use crate::rng::{Purpose, Stream};

/// Shape of each component `f_i(x) = phi(a_i^T x - b_i)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "family", deny_unknown_fields)]
pub enum SmoothFamily {
    /// `phi(r) = r^2 / 2`.
    LeastSquares,
    /// `phi(r) = r^4 / 4`. Not globally smooth; the reported constant is the
    /// Lipschitz bound of the gradient on the ball of the given radius.
    Quartic { radius: f64 },
}

impl Default for SmoothFamily {
    fn default() -> Self {
        SmoothFamily::LeastSquares
    }
}

impl SmoothFamily {
    fn phi(self, r: f64) -> f64 {
        match self {
            SmoothFamily::LeastSquares => 0.5 * r * r,
            SmoothFamily::Quartic { .. } => 0.25 * r * r * r * r,
        }
    }

    fn dphi(self, r: f64) -> f64 {
        match self {
            SmoothFamily::LeastSquares => r,
            SmoothFamily::Quartic { .. } => r * r * r,
        }
    }
}

/// `f(x) = (1/N) sum_i phi(a_i^T x - b_i)`.
#[derive(Clone, Debug)]
pub struct SmoothSum {
    design: DMatrix<f64>,
    targets: DVector<f64>,
    family: SmoothFamily,
    lipschitz: f64,
}

impl SmoothSum {
    /// `design` is `N x n` (row `i` is `a_i`), `targets` has length `N`.
    pub fn new(design: DMatrix<f64>, targets: DVector<f64>, family: SmoothFamily) -> Result<Self> {
        check_len("smooth term targets", design.nrows(), targets.len())?;
        if design.nrows() == 0 || design.ncols() == 0 {
            return Err(Error::Usage("smooth term needs at least one component and one variable".into()));
        }
        let count = design.nrows() as f64;
        let top = SymmetricEigen::new(design.transpose() * &design).eigenvalues.max().max(0.0) / count;
        let lipschitz = match family {
            SmoothFamily::LeastSquares => top,
            SmoothFamily::Quartic { radius } => {
                if !(radius > 0.0) {
                    return Err(Error::Config(format!("quartic radius must be positive, got {radius}")));
                }
                let worst = design
                    .row_iter()
                    .zip(targets.iter())
                    .map(|(a, b)| a.norm() * radius + b.abs())
                    .fold(0.0_f64, f64::max);
                3.0 * worst * worst * top
            }
        };
        Ok(SmoothSum {
            design,
            targets,
            family,
            lipschitz,
        })
    }

    pub fn components(&self) -> usize {
        self.design.nrows()
    }

    pub fn dim(&self) -> usize {
        self.design.ncols()
    }

    pub fn family(&self) -> SmoothFamily {
        self.family
    }

    pub fn design(&self) -> &DMatrix<f64> {
        &self.design
    }

    pub fn targets(&self) -> &DVector<f64> {
        &self.targets
    }

    /// Lipschitz constant of `grad f` (local to the ball for the quartic family).
    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    fn residuals(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.design * x - &self.targets
    }

    pub fn value(&self, x: &DVector<f64>) -> f64 {
        let r = self.residuals(x);
        r.iter().map(|&ri| self.family.phi(ri)).sum::<f64>() / self.components() as f64
    }

    pub fn grad(&self, x: &DVector<f64>) -> DVector<f64> {
        let r = self.residuals(x).map(|ri| self.family.dphi(ri));
        self.design.tr_mul(&r) / self.components() as f64
    }

    /// Mean of the component gradients over `indices`.
    pub fn grad_subset(&self, x: &DVector<f64>, indices: &[usize]) -> DVector<f64> {
        let mut g = DVector::zeros(self.dim());
        for &i in indices {
            let a = self.design.row(i);
            let r = (a * x)[0] - self.targets[i];
            g.axpy(self.family.dphi(r), &a.transpose(), 1.0);
        }
        g / indices.len() as f64
    }
}

/// How stochastic gradients are formed.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode", deny_unknown_fields)]
pub enum NoiseMode {
    Exact,
    /// Exact gradient plus `scale` times an isotropic standard normal in `R^n`.
    Gaussian {
        #[serde(default = "unit")]
        scale: f64,
    },
    /// Mean over `size` components drawn without replacement.
    Minibatch { size: usize },
}

fn unit() -> f64 {
    1.0
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseSpec {
    pub mode: NoiseMode,
    pub master_seed: u64,
}

impl NoiseSpec {
    pub fn exact() -> Self {
        NoiseSpec {
            mode: NoiseMode::Exact,
            master_seed: 0,
        }
    }

    pub fn gaussian(scale: f64, master_seed: u64) -> Self {
        NoiseSpec {
            mode: NoiseMode::Gaussian { scale },
            master_seed,
        }
    }
}

/// Result of the subgradient-distance computation.
#[derive(Clone, Debug)]
pub struct SubgradResidual {
    /// `||grad f(x) + A^T g||` at the best multiplier found; an upper bound
    /// on `dist(0, grad f(x) + A^T dh(Ax))`.
    pub achieved: f64,
    /// Projected-gradient stationarity of the inner problem at exit.
    pub certificate: f64,
    pub multiplier: DVector<f64>,
    pub converged: bool,
    pub iterations: usize,
}

const SUBGRAD_MAX_ITER: usize = 10_000;
const SUBGRAD_TOL: f64 = 1e-10;
const KINK_RTOL: f64 = 1e-10;

/// `H(x) = f(x) + h(Ax)` together with the smoothing level `mu` of `H_mu`.
#[derive(Clone, Debug)]
pub struct CompositeProblem {
    f: SmoothSum,
    h: Regularizer,
    a: LinearMap,
    envelope: EnvelopeView,
}

impl CompositeProblem {
    pub fn new(f: SmoothSum, h: Regularizer, a: LinearMap, mu: f64) -> Result<Self> {
        check_len("operator columns vs smooth term dimension", f.dim(), a.cols())?;
        check_len("regularizer dimension vs operator rows", a.rows(), h.dim())?;
        let envelope = h.envelope(mu)?;
        Ok(CompositeProblem { f, h, a, envelope })
    }

    /// Same data with another smoothing level.
    pub fn with_mu(&self, mu: f64) -> Result<Self> {
        Ok(CompositeProblem {
            envelope: self.h.envelope(mu)?,
            ..self.clone()
        })
    }

    pub fn f(&self) -> &SmoothSum {
        &self.f
    }

    pub fn h(&self) -> &Regularizer {
        &self.h
    }

    pub fn operator(&self) -> &LinearMap {
        &self.a
    }

    pub fn envelope(&self) -> &EnvelopeView {
        &self.envelope
    }

    pub fn mu(&self) -> f64 {
        self.envelope.mu()
    }

    pub fn n(&self) -> usize {
        self.a.cols()
    }

    pub fn m(&self) -> usize {
        self.a.rows()
    }

    /// `L = L_f + max{1/mu, varrho/(1 - varrho mu)} ||A||^2`, the Lipschitz
    /// constant of `grad H_mu`.
    pub fn smoothness(&self) -> f64 {
        self.f.lipschitz() + self.envelope.smoothness() * self.a.gram_norm()
    }

    fn check_x(&self, x: &DVector<f64>) -> Result<()> {
        check_len("x", self.n(), x.len())
    }

    pub fn grad_full(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_x(x)?;
        Ok(self.f.grad(x))
    }

    /// Gradient oracle under `noise`, drawing from the stream keyed by
    /// `(noise.master_seed, step_index)`.
    pub fn grad_stochastic(&self, x: &DVector<f64>, noise: &NoiseSpec, step_index: u64) -> Result<DVector<f64>> {
        self.check_x(x)?;
        match noise.mode {
            NoiseMode::Exact => Ok(self.f.grad(x)),
            NoiseMode::Gaussian { scale } => {
                let mut g = self.f.grad(x);
                let mut stream = Stream::new(noise.master_seed, Purpose::GradientNoise, step_index);
                for gi in g.iter_mut() {
                    *gi += scale * stream.normal();
                }
                Ok(g)
            }
            NoiseMode::Minibatch { size } => {
                let total = self.f.components();
                if size == 0 || size > total {
                    return Err(Error::Usage(format!("minibatch size {size} must be in 1..={total}")));
                }
                let mut stream = Stream::new(noise.master_seed, Purpose::GradientNoise, step_index);
                let idx = stream.sample_without_replacement(total, size);
                Ok(self.f.grad_subset(x, &idx))
            }
        }
    }

    pub fn objective_h(&self, x: &DVector<f64>) -> Result<f64> {
        self.check_x(x)?;
        Ok(self.f.value(x) + self.h.value_unchecked(&self.a.forward(x)))
    }

    pub fn objective_h_mu(&self, x: &DVector<f64>) -> Result<f64> {
        self.check_x(x)?;
        Ok(self.h_mu_unchecked(x))
    }

    pub(crate) fn h_mu_unchecked(&self, x: &DVector<f64>) -> f64 {
        self.f.value(x) + self.envelope.value_unchecked(&self.a.forward(x))
    }

    /// `grad f(x) + A^T grad h_mu(Ax)`.
    pub fn grad_h_mu(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_x(x)?;
        Ok(self.grad_h_mu_unchecked(x))
    }

    pub(crate) fn grad_h_mu_unchecked(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut g = self.f.grad(x);
        g += self.a.adjoint(&self.envelope.grad_unchecked(&self.a.forward(x)));
        g
    }

    /// `dist(0, grad f(x) + A^T dh(Ax))` by projected gradient on the box of
    /// coordinate subdifferentials.
    ///
    /// Coordinates of `Ax` within `1e-10 (1 + ||Ax||_inf)` of the kink count
    /// as on it, so points like [`Self::lift_point`] whose `Ax` is exact only
    /// up to rounding see the full interval `[-w, w]`.
    pub fn subgrad_residual(&self, x: &DVector<f64>) -> Result<SubgradResidual> {
        self.check_x(x)?;
        let c = self.f.grad(x);
        let ax = self.a.forward(x);
        let delta = KINK_RTOL * (1.0 + ax.amax());
        let boxes = self.h.subdifferential_near(&ax, delta);
        let project = |g: &mut DVector<f64>| {
            for (gi, &(lo, hi)) in g.iter_mut().zip(boxes.iter()) {
                *gi = gi.clamp(lo, hi);
            }
        };
        // Warm start from the unconstrained least-squares multiplier.
        let mut g = self
            .a
            .solve_gram_adjoint(&self.a.forward(&c))
            .map(|v| -v)
            .unwrap_or_else(|_| DVector::zeros(self.m()));
        project(&mut g);
        let step = 1.0 / self.a.gram_norm().max(f64::MIN_POSITIVE);
        let mut certificate = f64::INFINITY;
        let mut iterations = 0;
        while iterations < SUBGRAD_MAX_ITER {
            let residual = &c + self.a.adjoint(&g);
            let grad = self.a.forward(&residual);
            let mut next = &g - step * grad;
            project(&mut next);
            certificate = (&next - &g).norm() / step;
            g = next;
            iterations += 1;
            if certificate <= SUBGRAD_TOL {
                break;
            }
        }
        let achieved = (&c + self.a.adjoint(&g)).norm();
        Ok(SubgradResidual {
            achieved,
            certificate,
            multiplier: g,
            converged: certificate <= SUBGRAD_TOL,
            iterations,
        })
    }

    /// `x - A^T (A A^T)^{-1} (Ax - prox_{mu h}(Ax))`; satisfies
    /// `A x_bar = prox_{mu h}(Ax)`.
    pub fn lift_point(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_x(x)?;
        let ax = self.a.forward(x);
        let p = self.h.prox_unchecked(self.mu(), &ax);
        Ok(x - self.a.pinv_apply(&(ax - p))?)
    }

    /// `L_f L_h mu / sqrt(lambda_min(A A^T))`.
    pub fn eps_criticality_bound(&self) -> Result<f64> {
        let lmin = self.surjective_lambda_min()?;
        Ok(self.f.lipschitz() * self.h.lipschitz() * self.mu() / lmin.sqrt())
    }

    /// Largest `mu` for which the criticality bound is at most `eps`.
    pub fn max_mu_for_eps(&self, eps: f64) -> Result<f64> {
        let lmin = self.surjective_lambda_min()?;
        Ok(eps * lmin.sqrt() / (self.f.lipschitz() * self.h.lipschitz()))
    }

    fn surjective_lambda_min(&self) -> Result<f64> {
        if !self.a.is_surjective() {
            return Err(Error::NotSurjective {
                lambda_min: self.a.lambda_min(),
                tolerance: self.a.surjectivity_tolerance(),
            });
        }
        Ok(self.a.lambda_min())
    }
}

/// Built-in operator families.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum OperatorKind {
    Identity,
    /// Gaussian matrix whose singular values are replaced by an evenly
    /// spaced grid on `[sigma_min, sigma_max]`.
    Gaussian { sigma_min: f64, sigma_max: f64 },
    /// Forward differences `x_{i+1} - x_i` for the first `n - 1` rows, the
    /// last row picks `x_{n-1}` so that the square operator is invertible.
    FirstDifference,
}

pub fn build_operator(kind: &OperatorKind, m: usize, n: usize, seed: u64) -> Result<LinearMap> {
    match *kind {
        OperatorKind::Identity => {
            check_len("identity operator rows", n, m)?;
            Ok(LinearMap::identity(n))
        }
        OperatorKind::FirstDifference => {
            check_len("first-difference operator rows", n, m)?;
            let mut d = DMatrix::zeros(n, n);
            for i in 0..n - 1 {
                d[(i, i)] = -1.0;
                d[(i, i + 1)] = 1.0;
            }
            d[(n - 1, n - 1)] = 1.0;
            LinearMap::with_seed(d, seed)
        }
        OperatorKind::Gaussian { sigma_min, sigma_max } => {
            if !(sigma_min > 0.0 && sigma_max >= sigma_min) {
                return Err(Error::Config(format!(
                    "gaussian operator needs 0 < sigma_min <= sigma_max, got [{sigma_min}, {sigma_max}]"
                )));
            }
            let mut s = Stream::new(seed, Purpose::Data, 1);
            let g = DMatrix::from_fn(m, n, |_, _| s.normal());
            let svd = g.svd(true, true);
            let (u, vt) = (svd.u.expect("u requested"), svd.v_t.expect("v_t requested"));
            let k = m.min(n);
            let sigmas = DVector::from_fn(k, |i, _| {
                if k == 1 {
                    sigma_max
                } else {
                    sigma_max - (sigma_max - sigma_min) * i as f64 / (k - 1) as f64
                }
            });
            LinearMap::with_seed(u * DMatrix::from_diagonal(&sigmas) * vt, seed)
        }
    }
}

/// Synthetic regression data: Gaussian design, sparse planted signal and
/// Gaussian target noise.
pub fn generate_data(n: usize, components: usize, noise_level: f64, seed: u64) -> (DMatrix<f64>, DVector<f64>) {
    let mut s = Stream::new(seed, Purpose::Data, 0);
    let design = DMatrix::from_fn(components, n, |_, _| s.normal());
    let planted = DVector::from_fn(n, |i, _| if i % 3 == 0 { s.normal() * 2.0 } else { 0.0 });
    let targets = &design * planted + DVector::from_fn(components, |_, _| noise_level * s.normal());
    (design, targets)
}

/// Convenience constructor for tests and tooling.
pub fn least_squares_problem(
    design: DMatrix<f64>,
    targets: DVector<f64>,
    penalty: Penalty,
    a: LinearMap,
    mu: f64,
) -> Result<CompositeProblem> {
    let m = a.rows();
    CompositeProblem::new(
        SmoothSum::new(design, targets, SmoothFamily::LeastSquares)?,
        Regularizer::new(penalty, m)?,
        a,
        mu,
    )
}
