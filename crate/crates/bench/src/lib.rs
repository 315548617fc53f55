//! Pipeline orchestration for the `ctfdbf` command: configuration files,
//! the record and feature containers, the simulate / extract / evaluate
//! stages and their reports.

pub mod cli;
pub mod config;
pub mod container;
pub mod error;
pub mod pipeline;
pub mod report;

pub use config::PipelineConfig;
pub use error::{Error, Result};
