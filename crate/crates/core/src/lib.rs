//! Robust mean estimation for ε-corrupted high-dimensional samples by
//! iterative ℓp minimization of an outlier indicator followed by a
//! thresholded weighted mean.
//!
//! The crate is organized bottom-up:
//!
//! - [`linalg`]: matrix-free power iteration on weighted covariance operators,
//! - [`solver`]: the Step-1 packing-SDP solver and its brute-force oracle,
//! - [`estimator`]: the outer iteration, its initializer and baselines,
//! - [`theory`]: breakdown point, contraction constants and error bounds,
//! - [`datagen`]: synthetic corrupted samples,
//! - [`bench`]: data files, experiment configs and benchmark reports.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod datagen;
pub mod error;
pub mod estimator;
pub mod linalg;
pub mod solver;
pub mod theory;

pub use error::{Error, Result};
pub use estimator::{run_algorithm1, AlgoConfig, AlgoTrace, Termination};
pub use linalg::{OutlierIndicator, PointSet, SpectralResult, WeightVector};
