//! Monte Carlo laboratory for multidimensional backward stochastic
//! differential equations with stochastic coefficients and integrable data.
//!
//! The crate provides Brownian path ensembles, regression-based conditional
//! expectations, the truncation ladder and Picard solver, and sample-based
//! verifiers for the structural conditions on the generator.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod condexp;
pub mod error;
pub mod examples;
pub mod grid;
pub mod modulus;
pub mod norms;
pub mod numeric;
pub mod paths;
pub mod process;
pub mod solver;
pub mod truncation;
pub mod verifiers;

pub use error::{Error, Result};
pub use grid::TimeGrid;
pub use modulus::ModulusFunction;
pub use norms::{compute_norms, NormReport};
pub use paths::{CoefficientProcess, PathEnsemble};
pub use process::AdaptedProcess;
