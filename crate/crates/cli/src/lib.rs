//! File formats and subcommands behind the `convmcd` binary.

pub mod commands;
pub mod config;
pub mod fmap;
pub mod pngio;
pub mod report;
pub mod snapshot;

pub use commands::CliError;
pub use fmap::Fmap;
