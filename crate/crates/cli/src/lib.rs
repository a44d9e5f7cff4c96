//! Configuration and orchestration behind the `ngcl` binary.

pub mod config;
pub mod experiment;

pub use config::{parse_config, ConfigError, DatasetSpec, ExperimentConfig, Preset};
