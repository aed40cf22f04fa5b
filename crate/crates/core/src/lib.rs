//! Template-based gender-bias measurement over masked-language-model
//! pre-training checkpoints.
//!
//! The pipeline runs [`templates`] → scoring (external) → [`datastore`] →
//! [`metrics`] → [`analysis`] → [`report`], with [`frequency`] supplying
//! corpus frequency estimates for the frequency analysis.

// `!(x > 0.0)` is used on purpose so NaN takes the rejecting branch.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod config;
pub mod datastore;
pub mod frequency;
pub mod metrics;
pub mod report;
pub mod templates;
