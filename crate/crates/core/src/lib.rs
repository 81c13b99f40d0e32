//! Strong-current Ginzburg-Landau toolkit.
//!
//! Stages, in pipeline order:
//! - [`geometry`]: boundary curves, grids, geodesic and boundary distances;
//! - [`feasibility`]: admissibility checks on the boundary current;
//! - [`outer`]: the quasilinear outer problem for the phase potential and its correction;
//! - [`inner`]: one-dimensional boundary-layer profiles along the boundary;
//! - [`composite`]: blended approximation and residual diagnostics;
//! - [`stability`]: linear stability of normal-current states in one dimension;
//! - [`run`]: configuration, artifacts and the stage pipeline used by the CLI.

pub mod composite;
pub mod error;
pub mod feasibility;
pub mod geometry;
pub mod inner;
pub mod io;
pub mod linalg;
pub mod outer;
pub mod run;
pub mod spline;
pub mod stability;

pub use error::{Error, Result};

/// The critical normal current 2/(3 sqrt 3) = max over t of (t - t^3).
pub const CRITICAL_CURRENT: f64 = 0.384_900_179_459_750_5;

/// Largest admissible phase-gradient magnitude, 1/sqrt 3.
pub const CRITICAL_GRADIENT: f64 = 0.577_350_269_189_625_8;
