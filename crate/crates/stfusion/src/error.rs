use std::path::{Path, PathBuf};

use stfusion_core::error::ErrorCategory;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: u64, message: String },
    #[error("{path}:{line}: concentration must be positive, got {value}")]
    NegativeConcentration { path: PathBuf, line: u64, value: f64 },
    #[error("{path}:{line}: unknown site type `{value}`")]
    UnknownSiteType { path: PathBuf, line: u64, value: String },
    #[error("{path}: missing covariate column `{name}`")]
    MissingColumn { path: PathBuf, name: String },
    #[error("{0}: coordinates look like longitude/latitude; project them to planar km first")]
    GeographicCoordinates(PathBuf),
    #[error("NDVI undefined: NIR + red is zero")]
    ZeroDenominator,
    #[error(transparent)]
    Core(#[from] stfusion_core::Error),
}

pub type CliResult<T> = Result<T, CliError>;

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io { path: path.to_path_buf(), source }
    }

    /// Process exit status: 2 usage, 3 data, 4 numerical.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Core(e) if e.category() == ErrorCategory::Numerical => 4,
            _ => 3,
        }
    }
}
