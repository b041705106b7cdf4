//! Configuration, artifact files and the command drivers behind the CLI.

pub mod commands;
pub mod config;
pub mod output;

pub use commands::{
    cmd_convergence, cmd_simulate, cmd_stationary, cmd_verify, convergence_table, summary_table, ConvergenceRow,
    RunSummary, Skipped, StationaryResults, MAX_CELLS, SCHEMA_VERSION,
};
pub use config::{parse_config, parse_config_str, write_config, RunConfig, SUITES};
pub use output::{run_directory, MassEntry, OUTPUT_ROOT_ENV};
