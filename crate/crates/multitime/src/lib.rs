//! Controllability analysis for multitime linear PDE systems
//! dx/dt^a = M_a(t) x + N_a(t) u_a(t) over an open convex domain.
//!
//! The crate provides expression-defined coefficient matrices, integrability
//! residual checks, fundamental-matrix propagation along piecewise-C1
//! curves, curve gramians and their image subspaces, controllability
//! functional minimization, and minimum-phase transfer planning, together
//! with built-in demonstration scenarios.

pub mod control;
pub mod curve;
pub mod demos;
pub mod error;
pub mod expr;
pub mod gramian;
pub mod propagator;
pub mod quadrature;
pub mod subspace;
pub mod system;

pub use error::{Error, Result};

/// Default threshold for integrability residual checks.
pub const RESIDUAL_TOL: f64 = 1e-9;
/// Default relative eigenvalue/singular-value cutoff for rank decisions.
pub const SIGMA_TOL: f64 = 1e-10;
/// Relative tolerance for image-membership decisions on quadrature-computed
/// gramians (looser than SIGMA_TOL because the gramian itself carries
/// quadrature error).
pub const MEMBERSHIP_TOL: f64 = 1e-7;
/// Maximum accepted asymmetry of a matrix claimed symmetric.
pub const SYMMETRY_TOL: f64 = 1e-10;
