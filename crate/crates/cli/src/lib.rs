//! Configuration, experiment drivers and report writers for the
//! `oneshot-unsteady` command.

pub mod config;
pub mod output;
pub mod run;

pub use config::{parse_config, parse_config_str, ConfigError, Mode, ModelKind, RunConfig, SCHEMA};
pub use run::{build_model, run_command, Outcome, RunError};
