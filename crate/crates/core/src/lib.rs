pub mod cli;
pub mod continuation;
pub mod discretization;
pub mod error;
pub mod exec;
pub mod io;
pub mod model;
pub mod oracle;
pub mod pencil;
pub mod pipeline;
pub mod recovery;

pub use error::{Error, Result};

/// Convergence tolerance for SVD iterations; a bare machine epsilon can stall
/// deflation and return inaccurate singular vectors.
pub(crate) const SVD_EPS: f64 = 5.0 * f64::EPSILON;
