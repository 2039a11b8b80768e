//! Interpolating and smoothing splines on triangulated surfaces.
//!
//! The spline is represented through a P1 finite-element discretization of the
//! Laplace–Beltrami operator. Observation data live on mesh nodes or at free
//! points located on triangles; predictions are computed with sparse Cholesky
//! factorizations of the resulting precision matrix.

pub mod design;
pub mod error;
pub mod fem;
pub mod fit;
pub mod likelihood;
pub mod mesh;
pub mod metric;
pub mod reference;
pub mod sparse;
pub mod spline;

pub use error::{Error, Result};
