//! Entropy stable discontinuous Galerkin methods for the two-dimensional
//! shallow water equations on affine and curved triangular meshes.

pub mod bench;
pub mod config;
pub mod diagnostics;
pub mod error;
pub mod linalg;
pub mod mesh;
pub mod par;
pub mod quadrature;
pub mod refelem;
pub mod solver;
pub mod swe;

pub use error::{Error, Result};
