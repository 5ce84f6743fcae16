//! Numerical laboratory for radial fast-diffusion aggregation equations
//!
//! ∂ρ/∂t = Δρᵐ + ∇·(ρ∇V) + ∇·(ρ∇W∗ρ),  0 < m < 1,
//!
//! on a ball with no-flux boundary, written in the volume variable v = |B_1| rᵈ.

pub mod density_solver;
pub mod energetics;
pub mod error;
pub mod experiment;
pub mod mass_solver;
pub mod model;
pub mod stationary_solver;

pub use error::{ModelError, SolverError, StationaryError};
