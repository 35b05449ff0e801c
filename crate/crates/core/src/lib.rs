//! Discrete-time simulator of NR-V2X Mode 2 semi-persistent scheduling under
//! a resource-starvation attack, the matching analytical Age-of-Information
//! model, and a safety analyzer for C-V2X service-level requirements.

pub mod analytic;
pub mod model;
pub mod rng;
pub mod safety;
pub mod metrics;
pub mod sim;

pub use model::{
    validate_params, AttackMode, AttackParams, Config, ConfigError, Csr, ScenarioParams, SpsParams, UeState,
    ValidatedParams, CONFIG_KEYS,
};
pub use rng::{derive_substream, replica_seed, Purpose, Rng};
