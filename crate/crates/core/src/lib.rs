//! Spectral kernel regression on the circle, flat tori, and the 2- and
//! 3-spheres.
//!
//! The eigenbasis of the Laplace–Beltrami operator is known in closed form on
//! these manifolds, so kernels, their RKHS norms, and regression errors can
//! be computed exactly level by level and compared against closed-form
//! bounds.

// `!(x > 0.0)` rejects NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod bounds;
pub mod error;
pub mod harness;
pub mod kernel;
pub mod manifold;
pub mod regression;
pub mod seed;
pub mod special;
pub mod stats;

pub use error::{Error, Result};
pub use kernel::{KernelFamily, KernelSpec, SpectralCoeffs};
pub use manifold::{EigLevel, ManifoldKind, Point, SpectralManifold};
