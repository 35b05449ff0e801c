//! Experiment front end: config ingestion, single runs, sweeps, safety
//! scoring and analytic-versus-simulation validation.

pub mod analytic;
pub mod cli;
pub mod error;
pub mod output;
pub mod run;
pub mod safety;
pub mod sweep;
pub mod validate;

pub use analytic::{cmd_analytic, AnalyticRow};
pub use error::CliError;
pub use output::OutDir;
pub use run::{cmd_simulate, config_hash, RunRecord, RunSettings};
pub use safety::cmd_safety;
pub use sweep::{cmd_sweep, SweepAxis, SweepPoint, SweepSpec, SweepTable};
pub use validate::{cmd_validate, Fault, ValidationReport};
