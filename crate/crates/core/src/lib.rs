//! Simulation and verification toolkit for spatially non-homogeneous,
//! zero-drift random walks whose increment covariance depends on the
//! direction of the current position.
//!
//! The radial part of such a walk, rescaled diffusively, converges to a
//! Bessel process of dimension `V / U`. This crate provides the pieces
//! needed to check that numerically:
//!
//! - [`covariance`]: covariance fields and concrete walk models,
//! - [`walk`]: trajectories, scaled paths and exact compensators,
//! - [`bessel`]: squared-Bessel reference laws and samplers,
//! - [`stats`]: goodness of fit and recurrence/transience diagnostics,
//! - [`ensemble`]: seeded, worker-count-independent parallel runs.

pub mod bessel;
pub mod covariance;
pub mod ensemble;
mod error;
pub mod format;
pub mod special;
pub mod stats;
pub mod walk;

pub use error::{Error, Result};

/// Crate version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
