//! Structured-grid solver for the two-dimensional compressible, viscous,
//! non-resistive MHD system with a vertical magnetic field.
//!
//! The unknowns are the density `rho`, the in-plane velocity `u` and the
//! out-of-plane magnetic field `b`. The solver integrates the regularized
//! system
//!
//! ```text
//! rho_t + div(rho u)                                          = eps lap rho
//! (rho u)_t + div(rho u (x) u) + grad(a rho^gamma + b^2/2)
//!     + eps (grad rho . grad) u + delta grad (rho + b)^Gamma  = mu lap u + (mu + lambda) grad div u
//! b_t + div(b u)                                              = eps lap b
//! ```
//!
//! on a rectangle with homogeneous Neumann conditions for `rho`, `b` and
//! no-slip for `u`. Setting `eps = delta = 0` recovers the target system.
//!
//! Module map:
//! - [`params`], [`grid`], [`field`], [`state`], [`init`]: domain types and initial data
//! - [`ops`]: MAC-grid difference and transport operators
//! - [`linalg`]: matrix-free conjugate gradients
//! - [`solver`]: time stepping and run driver
//! - [`diagnostics`]: energy, functionals and space-time residuals
//! - [`verification`]: manufactured solutions, parameter sweeps, convergence orders
//! - [`appio`]: configuration, CSV and snapshot formats, command line

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod appio;
pub mod diagnostics;
pub mod field;
pub mod grid;
pub mod init;
pub mod linalg;
pub mod ops;
pub mod params;
pub mod solver;
pub mod state;
pub mod verification;

pub use field::{CellField, FaceField};
pub use grid::Grid;
pub use init::{init_state, InitialDataSpec, RatioEnvelope};
pub use params::{validate_params, ParamError, SimulationParams, Transport};
pub use solver::{SolverError, StepReport};
pub use state::State;
