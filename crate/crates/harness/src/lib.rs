//! Std companion to `cheatt-core`: CSV ingestion, synthetic tables,
//! training orchestration, sweeps, checkpoints, reports and the CLI.

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod data;
mod error;
pub mod report;
pub mod sweep;
pub mod synthetic;
pub mod train;

pub use error::{Error, Result};
