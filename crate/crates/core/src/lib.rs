//! Embedded, interior-embedded and hybridizable discontinuous Galerkin
//! discretizations of a Dirichlet boundary control problem for
//! convection-diffusion on the unit square.
//!
//! The pipeline is: [`mesh::Mesh`] -> [`spaces::build_spaces`] ->
//! [`assembly::Assembler`] -> [`solver`] -> [`postproc`].

pub mod assembly;
pub mod basis;
pub mod error;
pub mod mesh;
pub mod postproc;
pub mod problems;
pub mod quadrature;
pub mod solver;
pub mod spaces;
pub mod sparse;
pub mod study;

pub use error::{Error, Result};
pub use mesh::Mesh;
pub use problems::ProblemSpec;
pub use spaces::{build_spaces, Spaces, TraceVariant};
