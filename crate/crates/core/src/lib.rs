//! Linear preconditioning for Metropolis-adjusted MCMC on strongly
//! log-concave targets.
//!
//! The crate computes condition numbers before and after a linear change of
//! variables, evaluates perturbation-theoretic bounds on the preconditioned
//! condition number, runs preconditioned random-walk Metropolis and MALA
//! chains, and measures their efficiency.
//!
//! Module map:
//! - [`linalg`]: dense symmetric kernels (eigendecomposition, square roots,
//!   condition numbers, Loewner order).
//! - [`targets`]: potentials with analytic derivatives and data generators.
//! - [`preconditioners`]: constructors for `L` and the pushforward target.
//! - [`conditioning`]: κ, κ_L and every bound on them.
//! - [`samplers`]: RWM, MALA, step-size adaptation, mode finding.
//! - [`diagnostics`]: ESS, autocorrelation, gap surrogate, rank tests.
//! - [`experiments`]: the experiment harness behind the `precond` binary.

pub mod conditioning;
pub mod diagnostics;
pub mod error;
pub mod experiments;
pub mod fixtures;
pub mod linalg;
pub mod model_file;
pub mod preconditioners;
pub mod samplers;
pub mod targets;

pub use error::{Error, Result};
pub use linalg::{Matrix, SymMatrix, Vector};
