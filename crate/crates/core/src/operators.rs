//! Dense linear operators and the spectral quantities the algorithms need.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::error::{check_len, Error, Result};
use crate::rng::{Purpose, Stream};

/// Relative cutoff on `lambda_min(A A^T) / ||A^T A||` below which `A` is
/// treated as not surjective.
pub const SURJECTIVITY_RTOL: f64 = 1e-10;

const POWER_TOL: f64 = 1e-12;
const POWER_MAX_ITER: usize = 50_000;

/// A dense `m x n` operator `A` with cached `||A^T A||`, `lambda_min(A A^T)`
/// and, when `A` is surjective, a Cholesky factor of `A A^T`.
///
/// Immutable after construction.
#[derive(Clone, Debug)]
pub struct LinearMap {
    matrix: DMatrix<f64>,
    gram_norm: f64,
    lambda_min: f64,
    chol: Option<Cholesky<f64, Dyn>>,
}

impl LinearMap {
    /// Wraps `matrix`, seeding the power iteration with `seed`.
    pub fn with_seed(matrix: DMatrix<f64>, seed: u64) -> Result<Self> {
        if matrix.nrows() == 0 || matrix.ncols() == 0 {
            return Err(Error::Usage("operator must have at least one row and column".into()));
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::Usage("operator has non-finite entries".into()));
        }
        let mut map = LinearMap {
            matrix,
            gram_norm: 0.0,
            lambda_min: 0.0,
            chol: None,
        };
        map.gram_norm = match map.estimate_gram_norm(POWER_TOL, POWER_MAX_ITER, seed) {
            Ok(v) => v,
            // Near-degenerate dominant eigenvalues stall the residual test.
            Err(_) => dense_max_eig(&map.matrix.transpose() * &map.matrix),
        };
        map.lambda_min = map.min_eig_gram_adjoint();
        if map.is_surjective() {
            map.chol = Cholesky::new(&map.matrix * map.matrix.transpose());
        }
        Ok(map)
    }

    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        Self::with_seed(matrix, 0)
    }

    pub fn identity(n: usize) -> Self {
        Self::new(DMatrix::identity(n, n)).expect("identity is a valid operator")
    }

    pub fn diagonal(diag: &[f64]) -> Result<Self> {
        Self::new(DMatrix::from_diagonal(&DVector::from_column_slice(diag)))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let m = rows.len();
        let n = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != n) {
            return Err(Error::Dimension {
                what: "operator row",
                expected: n,
                got: bad.len(),
            });
        }
        Self::new(DMatrix::from_fn(m, n, |i, j| rows[i][j]))
    }

    pub fn rows(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn cols(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// `A x`.
    pub fn apply(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        check_len("apply: x", self.cols(), x.len())?;
        Ok(self.forward(x))
    }

    /// `A^T y`.
    pub fn apply_adjoint(&self, y: &DVector<f64>) -> Result<DVector<f64>> {
        check_len("apply_adjoint: y", self.rows(), y.len())?;
        Ok(self.adjoint(y))
    }

    pub(crate) fn forward(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.matrix * x
    }

    pub(crate) fn adjoint(&self, y: &DVector<f64>) -> DVector<f64> {
        self.matrix.tr_mul(y)
    }

    /// Cached `||A^T A||`.
    pub fn gram_norm(&self) -> f64 {
        self.gram_norm
    }

    /// `||A|| = sqrt(||A^T A||)`.
    pub fn norm(&self) -> f64 {
        self.gram_norm.sqrt()
    }

    /// Cached `lambda_min(A A^T)`.
    pub fn lambda_min(&self) -> f64 {
        self.lambda_min
    }

    pub fn surjectivity_tolerance(&self) -> f64 {
        SURJECTIVITY_RTOL * self.gram_norm
    }

    pub fn is_surjective(&self) -> bool {
        self.lambda_min > self.surjectivity_tolerance()
    }

    /// Largest eigenvalue of `A^T A` by power iteration.
    ///
    /// Stops once the eigen-residual `||A^T A v - theta v||` falls below
    /// `tol * theta`. The start vector comes from the `PowerIteration`
    /// stream under `seed`.
    pub fn estimate_gram_norm(&self, tol: f64, max_iter: usize, seed: u64) -> Result<f64> {
        if !(tol > 0.0) {
            return Err(Error::Usage(format!("power iteration tolerance must be positive, got {tol}")));
        }
        let n = self.cols();
        let mut v = DVector::from_vec(Stream::new(seed, Purpose::PowerIteration, 0).normal_vec(n));
        v.normalize_mut();
        let mut theta = 0.0;
        let mut residual = f64::INFINITY;
        for _ in 0..max_iter {
            let w = self.adjoint(&self.forward(&v));
            theta = v.dot(&w);
            residual = (&w - theta * &v).norm();
            if residual <= tol * theta.abs() || w.norm() == 0.0 {
                return Ok(theta.max(0.0));
            }
            v = w.normalize();
        }
        Err(Error::NoConvergence {
            what: "power iteration on A^T A",
            iterations: max_iter,
            estimate: theta,
            residual,
        })
    }

    /// Smallest eigenvalue of `A A^T` by dense symmetric eigendecomposition.
    pub fn min_eig_gram_adjoint(&self) -> f64 {
        let aat = &self.matrix * self.matrix.transpose();
        SymmetricEigen::new(aat).eigenvalues.min()
    }

    /// `A^T (A A^T)^{-1} r`, the minimum-norm solution of `A v = r`.
    pub fn pinv_apply(&self, r: &DVector<f64>) -> Result<DVector<f64>> {
        check_len("pinv_apply: r", self.rows(), r.len())?;
        Ok(self.adjoint(&self.solve_gram_adjoint(r)?))
    }

    /// `(A A^T)^{-1} r`.
    pub fn solve_gram_adjoint(&self, r: &DVector<f64>) -> Result<DVector<f64>> {
        check_len("solve_gram_adjoint: r", self.rows(), r.len())?;
        let chol = self.chol.as_ref().ok_or(Error::NotSurjective {
            lambda_min: self.lambda_min,
            tolerance: self.surjectivity_tolerance(),
        })?;
        Ok(chol.solve(r))
    }

    /// `||A^T (A A^T)^{-1}|| * ||A|| = sqrt(||A^T A|| / lambda_min(A A^T))`.
    pub fn condition_number(&self) -> Result<f64> {
        if !self.is_surjective() {
            return Err(Error::NotSurjective {
                lambda_min: self.lambda_min,
                tolerance: self.surjectivity_tolerance(),
            });
        }
        Ok((self.gram_norm / self.lambda_min).sqrt().max(1.0))
    }
}

fn dense_max_eig(sym: DMatrix<f64>) -> f64 {
    SymmetricEigen::new(sym).eigenvalues.max()
}
