//! Command-line surface for the interferogram simulator and estimator:
//! configuration parsing, the IFG1 image container, content-hash
//! manifests, raster rendering and the batch subcommands.

pub mod commands;
pub mod config;
pub mod error;
pub mod ifg1;
pub mod manifest;
pub mod render;

pub use error::CliError;

/// Environment variable that overrides the configured output directory.
pub const OUTPUT_DIR_ENV: &str = "IONFRINGE_OUT_DIR";
