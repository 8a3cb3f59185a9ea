//! File formats, checkpoints, run configuration and the experiment runner
//! around `flexgad-core`, plus the subcommands of the `flexgad` binary.

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod convert;
pub mod error;
pub mod formats;
pub mod output;
pub mod report;
pub mod runner;

pub use error::{IoError, Result};
