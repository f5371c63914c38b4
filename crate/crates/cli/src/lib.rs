//! Experiment harness for the fednoise simulator: spec files, sweep
//! orchestration, run manifests, verification, and figure data emission.

pub mod csvdata;
pub mod error;
pub mod figures;
pub mod manifest;
pub mod spec;
pub mod sweep;

pub use error::{CliError, Result};
