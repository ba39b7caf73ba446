//! Configuration, orchestration and report emission for numeraire
//! experiments.

pub mod config;
pub mod output;
pub mod run;

pub use config::{parse_config, serialize_config, ConfigError, RunConfig};
pub use run::{plots_command, run_command, validate_command, EXIT_ERROR, EXIT_PASS, EXIT_TEST_FAILURE};
