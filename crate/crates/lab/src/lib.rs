//! Experiment harness for the `nnwalk` library: configuration, runners,
//! CSV and JSON reports, and the acceptance suite.

pub mod acceptance;
pub mod config;
pub mod error;
pub mod experiments;
pub mod report;
pub mod thresholds;

pub use error::{LabError, Result};
