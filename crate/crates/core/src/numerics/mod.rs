//! Shared numerical kernels: adaptive Gauss-Kronrod quadrature, partial
//! top-k selection and Gaussian distribution utilities.
//!
//! Everything here is a pure function and safe for unlimited concurrent use.

mod gaussian;
mod quadrature;
mod select;

pub use gaussian::{gaussian_cvar_lower, GaussianError};
pub use quadrature::{integrate, integrate_with_limit, QuadratureError, QuadratureResult};
pub use select::{select_top_k, Direction, SelectError};
