//! Small numerical kernels shared across the crate.

pub mod quadrature;
pub mod roots;
pub mod stats;

pub use quadrature::{integrate, QuadratureOptions, QuadratureResult};
pub use roots::brent;
pub use stats::{neumaier_sum, Estimate};
