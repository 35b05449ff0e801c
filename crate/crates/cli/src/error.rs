use std::path::PathBuf;

use aoi_starve_core::analytic::AnalyticError;
use aoi_starve_core::metrics::{MetricsError, SimulateError};
use aoi_starve_core::safety::SafetyError;
use aoi_starve_core::sim::SimError;
use aoi_starve_core::ConfigError;
use thiserror::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_VALIDATION: i32 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("validation failed: {0}")]
    Validation(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Io { .. } => EXIT_IO,
            CliError::Validation(_) => EXIT_VALIDATION,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }

    pub(crate) fn csv(path: impl Into<PathBuf>, e: csv::Error) -> Self {
        CliError::io(path, std::io::Error::other(e))
    }
}

macro_rules! config_from {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::Config(e.to_string())
            }
        }
    )*};
}

config_from!(ConfigError, AnalyticError, SimError, MetricsError, SafetyError, SimulateError);
