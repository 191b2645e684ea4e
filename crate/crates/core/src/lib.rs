//! Linearized proximal ADMM for nonconvex composite problems
//! `min_x f(x) + h(Ax)`, the ODE/SDE limits of the three algorithm
//! variants, and tooling that checks their descent and rate behaviour
//! numerically.

pub mod analysis;
pub mod csvio;
pub mod dynamics;
pub mod error;
pub mod harness;
pub mod operators;
pub mod problems;
pub mod regularizers;
pub mod rng;
pub mod solvers;
pub mod stats;

pub use analysis::{RateFit, Verdict};
pub use dynamics::{FlowConfig, FlowKind, SampledPath};
pub use error::{Error, Result};
pub use harness::{RunConfig, RunKind, RunManifest};
pub use operators::LinearMap;
pub use problems::{CompositeProblem, NoiseMode, NoiseSpec, SmoothFamily, SmoothSum};
pub use regularizers::{EnvelopeView, Penalty, Regularizer, RegularizerSpec};
pub use solvers::{Algorithm, CheckedParams, SolverParams, Trajectory};
