//! Command-line pipeline around `stfusion-core`: configuration, CSV
//! ingestion, output tables and run manifests.

pub mod cli;
pub mod config;
pub mod error;
pub mod ingest;
pub mod output;

pub use config::RunConfig;
pub use error::{CliError, CliResult};
