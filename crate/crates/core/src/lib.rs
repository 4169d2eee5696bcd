//! Ancestral structure discovery among a small set of foreground variables
//! that sit downstream of a large background tier.
//!
//! The crate is organised bottom-up:
//!
//! - [`graph`]: two-tier mixed graphs, d-separation, ground-truth relations
//!   and the identifiability check.
//! - [`oracle`]: the lazy independence oracle and the fixpoint learner that
//!   runs against a known graph.
//! - [`select`]: regression-based feature selectors (lasso path and gradient
//!   boosted trees) used as conditional independence surrogates.
//! - [`stability`]: complementary-pairs rates, the r-concave tail bound and
//!   the stability decision rule.
//! - [`sample`]: the finite-sample learner.
//! - [`simgen`]: the simulation design used for benchmarking.
//! - [`harness`]: metrics, file formats and the benchmark runner.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases at
//! the crate root fix the scalar for the common case.

pub mod error;
pub mod graph;
pub mod harness;
pub mod oracle;
pub mod sample;
pub mod scalar;
pub mod select;
pub mod simgen;
pub mod stability;

pub use error::{Error, Result};
pub use graph::{AncestralMatrix, Relation, Tier, TieredGraph};
pub use scalar::Scalar;

/// Simulated dataset in double precision.
pub type Dataset64 = simgen::Dataset<f64>;
/// Simulated dataset in single precision.
pub type Dataset32 = simgen::Dataset<f32>;
/// Lasso regularization path in double precision.
pub type LassoPath64 = select::lasso::LassoPath<f64>;
/// Lasso regularization path in single precision.
pub type LassoPath32 = select::lasso::LassoPath<f32>;
/// Finite-sample run output in double precision.
pub type SampleResult64 = sample::SampleResult;
