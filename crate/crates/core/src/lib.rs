//! Exact information matrices, noisy-quadratic iterate dynamics and
//! generalization-gap criteria for small model families.
//!
//! Everything numeric is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix the common `f64` instantiation.

// `!(x > 0)`-style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod criteria;
pub mod error;
pub mod infomat;
pub mod linalg;
pub mod models;
pub mod quadsim;
pub mod scalar;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Matrix64 = linalg::Matrix<f64>;
pub type SymMatrix64 = linalg::SymMatrix<f64>;
pub type LossOracle64 = models::LossOracle<f64>;
pub type Dataset64 = models::Dataset<f64>;
pub type InfoMatrixSet64 = infomat::InfoMatrixSet<f64>;
pub type QuadraticProblem64 = quadsim::QuadraticProblem<f64>;
pub type MethodSpec64 = quadsim::MethodSpec<f64>;
