//! Command-line pipeline over `ckbias-core`: template manifests, frequency
//! tables, and the analysis report bundle.

pub mod commands;
pub mod config;
