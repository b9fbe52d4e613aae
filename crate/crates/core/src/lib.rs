//! Point-based crowd localization toolkit.
//!
//! Crowds are represented purely as sets of head points. The crate provides
//! the pieces needed to evaluate and train such point predictors:
//!
//! * [`geometry`] – points, predictions, scenes and kNN density scales.
//! * [`assignment`] – matching cost matrix and a rectangular Hungarian solver.
//! * [`metrics`] – density-normalized average precision (nAP), counting
//!   errors and point-level precision/recall.
//! * [`proposal`] – reference-point layouts, offset decoding and the greedy
//!   target-assignment baselines.
//! * [`trainer`] – matching loss with analytic gradients and a per-scene
//!   optimizer over proposal offsets and logits.
//! * [`synth`] – seeded synthetic scenes and prediction corruption.

pub mod assignment;
pub mod error;
pub mod geometry;
pub mod metrics;
pub mod proposal;
pub mod synth;
pub mod trainer;

pub use error::{Error, Result};
pub use geometry::{euclidean_distance, knn_density, match_criterion, DensityContext, Point, Prediction, Scene};
