//! Class-incremental learning with a bounded exemplar memory and post-hoc
//! score calibration.
//!
//! The math modules ([`backbone`], [`breaks`], [`calibration`], [`metrics`],
//! [`memory::herd_order`]) are generic over the scalar type; the aliases
//! below fix the common choices. Feature tables ([`dataset`]) are `f64`.

pub mod backbone;
pub mod breaks;
pub mod calibration;
pub mod dataset;
pub mod error;
pub mod harness;
pub mod matrix;
pub mod memory;
pub mod metrics;
pub mod rng;
pub mod scalar;

pub use error::{Error, Result};
pub use matrix::Matrix;
pub use scalar::{Real, Scalar};

/// Exact rational scalar used to check natural breaks without rounding.
pub type Exact = num_rational::Rational64;

pub type LinearModelF64 = backbone::LinearModel<f64>;
pub type LinearModelF32 = backbone::LinearModel<f32>;
pub type CalibratorF64 = calibration::Calibrator<f64>;
pub type CalibratorF32 = calibration::Calibrator<f32>;
pub type CalibContextF64 = calibration::CalibContext<f64>;
pub type ScoreMatrix = Matrix<f64>;
pub type ProbabilityMatrix = Matrix<f64>;
pub type BreaksF64 = breaks::BreaksResult<f64>;
pub type BreaksExact = breaks::BreaksResult<Exact>;
