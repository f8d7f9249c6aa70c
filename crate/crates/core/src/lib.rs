//! Deformable-body simulation with a multigrid-accelerated global XPBD solver.
//!
//! Each simulation step solves the dual (Lagrange-multiplier) linear system of
//! the compliant-constraint formulation with conjugate gradient, preconditioned
//! by one V-cycle of an unsmoothed-aggregation algebraic multigrid hierarchy.
//! A plain diagonally-preconditioned XPBD baseline is included for comparison.
//!
//! Module map:
//! - [`sparse`]: CSR kernels, dense factorization, thin QR, power method.
//! - [`constraints`]: constraint evaluation (distance, ARAP), dual-system
//!   assembly, position correction.
//! - [`amg_setup`]: strength filter, aggregation, near-kernel bootstrap,
//!   prolongator construction, hierarchy build.
//! - [`amg_solve`]: smoothers, V-cycle, MGPCG.
//! - [`sim`]: the outer simulation loop, baselines, collision response.
//! - [`scenes`]: procedural meshes, tet-mesh file I/O, SDF colliders, presets.
//! - [`spectrum`]: radially-averaged residual power spectra on cloth grids.

pub mod amg_setup;
pub mod amg_solve;
pub mod constraints;
pub mod error;
pub mod scenes;
pub mod sim;
pub mod sparse;
pub mod spectrum;

pub use error::{Error, Result};
