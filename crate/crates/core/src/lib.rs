//! Two-dimensional Cahn-Hilliard-Darcy solver with mass sources, plus the
//! exact discrete tangent/adjoint machinery needed to optimize those sources.
//!
//! The crate is layered bottom-up:
//!
//! * [`grid`]: staggered grid, difference operators, exact adjoint pairs.
//! * [`spectral`]: cosine-basis diagonalization of the Neumann Laplacian,
//!   used for preconditioning and for fractional powers.
//! * [`linsolve`]: preconditioned conjugate gradients.
//! * [`materials`]: logarithmic free energy (singular and regularized) and
//!   concentration-dependent viscosity models.
//! * [`darcy`]: the pressure solve and velocity reconstruction.
//! * [`update_op`]: the per-step implicit operator and its transpose, shared
//!   by the tangent and adjoint sweeps.
//! * [`state`]: the time stepper.
//! * [`tangent`], [`adjoint`], [`second_order`]: exact derivatives of the
//!   discrete flow map, first and second order.
//! * [`control`]: cost functional, admissible-set projection, projected
//!   gradient optimization, optimality diagnostics.
//! * [`config`], [`io`], [`modes`]: run configuration, field/CSV output and
//!   the CLI entry points.

pub mod adjoint;
pub mod config;
pub mod control;
pub mod darcy;
pub mod error;
pub mod grid;
pub mod io;
pub mod modes;
pub mod materials;
pub mod linsolve;
pub mod second_order;
pub mod spectral;
pub mod state;
pub mod tangent;
pub mod update_op;

pub use error::{ChdError, Result};
