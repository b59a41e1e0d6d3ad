//! Residual-based health indicators and fault detection for multivariate
//! condition-monitoring fleets.

pub mod data;
pub mod config;
pub mod detector;
pub mod error;
pub mod experiment;
pub mod hi;
pub mod io;
pub mod models;
pub mod nn;
pub mod preprocess;
pub mod report;
pub mod seeds;
pub mod segmentation;
pub mod synth;

pub use error::{Error, ErrorCategory, Result};
