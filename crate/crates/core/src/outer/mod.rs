//! The outer problem: the divergence-form equation for the phase potential
//! with prescribed conormal current, its first correction, and derived fields.

pub mod assembly;
pub mod ellipticity;
pub mod fields;
pub mod mesh;
pub mod multigrid;
pub mod solver;

pub use ellipticity::{ellipticity_eigenvalues, ellipticity_matrix};
pub use fields::{boundary_identity, boundary_trace, gradient_identity, outer_fields, solve_correction, BoundaryTrace, OuterFields};
pub use mesh::FiniteCellMesh;
pub use solver::{check_boundary_maximum, solve_outer, OuterOptions, OuterSolution};
