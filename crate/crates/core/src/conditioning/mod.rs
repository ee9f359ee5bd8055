//! Condition numbers before and after preconditioning, measurement of the
//! structural constants (ε, δ, γ), and every bound on κ_L.

mod assumptions;
mod bounds;
mod kappa;
mod localisation;

pub use assumptions::*;
pub use bounds::*;
pub use kappa::*;
pub use localisation::*;
