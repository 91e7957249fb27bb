//! Recovery of multivariate exponential sums
//! `f(t) = sum_j gamma_j exp(<lambda_j, t>)` from finitely many Fourier
//! coefficients, by reducing the multivariate rational interpolation problem
//! the coefficients satisfy to univariate ones.

pub mod catalog;
pub mod error;
pub mod expsum;
pub mod formats;
pub mod linalg;
pub mod rational;
pub mod recursive;
pub mod sparse;

pub use error::{Error, Result};
pub use num_complex::Complex64;
