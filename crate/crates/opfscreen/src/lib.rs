//! File formats, worker pools and evaluation runs around `opfscreen-core`.

pub mod case_io;
pub mod commands;
pub mod config;
pub mod dataset_io;
pub mod error;
pub mod eval;
pub mod files;
pub mod model_io;
pub mod report;
pub mod runner;
pub mod solution_io;

pub use error::{Error, ErrorKind, Result};
