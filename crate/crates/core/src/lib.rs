//! Numerical laboratory for the limiting spectra of high-contrast random
//! elastic composites (double-porosity scaling).

pub mod error;
pub mod fem;
pub mod geometry;
pub mod homog;
pub mod linalg;
pub mod spectral;
pub mod tensors;
pub mod validate;
pub mod zhikov;

pub use error::{Error, Result};

/// Version of this crate, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
