//! File formats, configuration and the training loop for `otmatch-core`.

pub mod bench;
pub mod checkpoint;
pub mod cluster;
pub mod config;
pub mod error;
pub mod idx;
pub mod metrics;
pub mod runner;

pub use error::{Result, RunError};
