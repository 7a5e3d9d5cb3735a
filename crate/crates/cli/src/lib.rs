//! `aloe` command-line front end and the human-oracle HTTP service.

pub mod args;
pub mod commands;
pub mod error;
pub mod serve;

pub use error::CliError;
