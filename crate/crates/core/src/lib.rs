//! Directed polymer in random environment on Z^2 in the intermediate
//! disorder regime `beta_N = beta_hat / sqrt(R_N)`.
//!
//! The crate contains exact walk kernels and overlap dynamic programs, a
//! counter-based disorder source, transfer-matrix partition functions with
//! space-time windows, truncated chaos expansions, the analytic limit
//! objects (exponential-integral covariance kernel, one-point and field
//! predictions), hypercontractivity constants of single disorder
//! variables, and a replica harness with the statistical tests used to
//! compare finite-N simulations with the limits.

pub mod chaos;
pub mod cli;
pub mod disorder;
pub mod error;
pub mod fastmath;
pub mod hyper;
pub mod limit_theory;
pub mod partition;
pub mod stats;
pub mod sum;
pub mod walk_kernels;

pub use error::{Error, Result};
