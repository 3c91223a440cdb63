//! Solver components for local and nonlocal Swift-Hohenberg equations
//!
//!   du/dt + (I + Laplacian)^2 u = r u + N(u) + nonlocal terms
//!
//! on rectangular boxes with homogeneous Neumann walls, plus the analysis
//! harness that measures how the nonlocal models approach their local limits
//! as the interaction radius shrinks.
//!
//! Module layout follows the pipeline: `domain` (grid and cosine transform),
//! `kernels` (interaction kernels on the offset lattice), `nonlocal`
//! (convolution operators), `model` (right-hand sides and energies),
//! `stepper` (time integration), `analysis` (norms, sweeps, reports),
//! `initial` (initial data builders).

pub mod analysis;
pub mod domain;
pub mod error;
pub mod initial;
pub mod kernels;
pub mod model;
pub mod nonlocal;
pub mod stepper;
mod util;

pub use error::{Error, Result};
