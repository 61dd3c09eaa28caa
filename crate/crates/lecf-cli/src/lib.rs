//! IO, file formats and the command-line interface for the recommender.
//!
//! The core crate is pure and `no_std`; everything that touches the
//! filesystem or a terminal lives here:
//!
//! - [`dataio`]: TSV ingestion with threshold binarization and the
//!   end-to-end preprocessing pipeline.
//! - [`formats`]: versioned JSON containers for bundles, checkpoints and
//!   metric records.
//! - [`commands`]: the `lecf` subcommands (preprocess, train, evaluate,
//!   probe, stats).

pub mod commands;
pub mod dataio;
pub mod error;
pub mod formats;

pub use error::{CliError, CliResult};
