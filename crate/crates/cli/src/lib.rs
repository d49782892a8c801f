//! Command-line pipeline: configuration, archive fetch, stage orchestration,
//! report emission and synthetic worlds.

pub mod config;
pub mod error;
pub mod fetch;
pub mod pipeline;
pub mod report;
pub mod synth_world;

pub use config::{ConfigArgs, PipelineConfig};
pub use error::CliError;
pub use pipeline::{run_pipeline, RunManifest, Stages};
