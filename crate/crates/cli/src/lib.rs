//! Command-line front end: instance files, one subcommand per check or
//! experiment, CSV output and a 0/1/2 exit-code contract.

pub mod commands;
pub mod instance;
pub mod output;

pub use commands::{exit_code, run, Cli};
