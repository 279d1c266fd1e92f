//! Controlled singularly perturbed relaxation systems.
//!
//! The crate covers affine slow/fast control systems and their ε → 0 reduction,
//! stiff time integration, grid solvers for the associated Hamilton–Jacobi–Bellman
//! equations and cell problems, a zoo of semi-discretized relaxation models, and
//! an experiment harness used by the `relaxctl` binary.

pub mod error;
pub mod experiments;
pub mod hjb;
pub mod integrator;
pub mod linalg;
pub mod reduction;
pub mod system;
pub mod zoo;

pub use error::{Error, Result};
pub use linalg::{Matrix, Vector};
