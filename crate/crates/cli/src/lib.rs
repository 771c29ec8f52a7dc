//! Configuration, pipeline orchestration, rendering and self-checks for the
//! `cws` command-line tool.

pub mod config;
pub mod error;
pub mod metrics;
pub mod pipeline;
pub mod render;
pub mod validate;

pub use config::{load_config, PipelineConfig};
pub use error::{ConfigError, PipelineError, Stage};
pub use pipeline::{execute, run_pipeline, Manifest, PipelineRun};
