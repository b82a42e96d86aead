//! Command-line front end for `aoii-core`: config parsing, preset sources
//! and the CSV-emitting experiment drivers behind the `aoii` binary.

pub mod commands;
pub mod config;
pub mod error;
pub mod presets;
mod run;

pub use config::{ExperimentConfig, LambdaSpec, SourceSpec};
pub use error::{CliError, Result};
pub use presets::preset_source;
pub use run::run;
