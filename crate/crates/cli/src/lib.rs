//! Command-line pipeline around the `eisdrt` library: synthetic multisine
//! experiments, DRT analysis of spectrum files, concentration calibration
//! and SVG figures.

pub mod commands;
pub mod config;
pub mod error;
pub mod files;
pub mod plot;

pub use commands::{cmd_calibrate, cmd_drt, cmd_pipeline, cmd_simulate, RunOptions};
pub use error::{CliError, Result};
