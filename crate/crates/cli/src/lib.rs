//! Command-line orchestration for bandlab experiments: configuration
//! merging, execution and artifact emission.

pub mod config;
pub mod report;
pub mod run;

pub use config::{parse_config, ConfigError, ExperimentConfig, ExperimentKind, Settings};
pub use run::{run, Outcome};
