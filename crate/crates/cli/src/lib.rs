//! File-based pipeline around `roletrack-core`: configuration, stage
//! directories with manifests, CSV/JSON formats and SVG plots.

pub mod config;
pub mod error;
pub mod formats;
pub mod pipeline;
pub mod plot;
pub mod store;

pub use config::PipelineConfig;
pub use error::{CliError, Result};
pub use pipeline::{run, run_pipeline, Stage};
