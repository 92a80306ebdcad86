//! Inexact proximal augmented Lagrangian solver for smooth conic programs
//! over products of zero, orthant, second-order, and semidefinite cones,
//! together with an empirical harness that measures KKT error bounds,
//! quadratic growth, and Q-linear/Q-superlinear convergence rates on
//! benchmark problems with possibly non-unique Lagrange multipliers.

pub mod analysis;
pub mod cli;
pub mod cones;
pub mod drivers;
pub mod error;
pub mod lagrangian;
pub mod model;
pub mod subsolver;

pub use error::{Error, Result};
