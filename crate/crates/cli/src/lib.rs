//! Command-line front end for the `semigen` specification test.

pub mod config;
pub mod run;

pub use config::{parse_config, parse_config_with_env, Command, ConfigError, Format, ModelChoice, ModelKind, RunConfig};
pub use run::{render, run, RunError};
