//! Offline/online reduced-order modeling for parametric PDE eigenvalue
//! problems: P1 FEM assembly with affine parameter dependence, four
//! parameter-sampling schemes, POD basis extraction, and Galerkin-projected
//! reduced eigensolves.

pub mod error;
pub mod eigensolve;
pub mod mesh_fem;
pub mod pod;
pub mod rom;
pub mod sampling;
pub mod sparse;

pub use error::{Error, Result};
