//! File formats, configuration and subcommands of the `gwmv` runner.

pub mod commands;
pub mod config;
pub mod dataset;
pub mod error;
pub mod io;
