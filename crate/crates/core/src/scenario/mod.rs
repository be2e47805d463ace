//! Deterministic market runs.

pub mod config;
pub mod run;
pub mod world;

pub use config::{ConfigError, ScenarioConfig};
pub use run::{conservation, run, write_outputs, Conservation, RunError, RunOutput, GENESIS};
