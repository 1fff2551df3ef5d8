//! Command-line driver for the crossview augmentation pipeline.

pub mod app;
pub mod config;
pub mod pipeline;
pub mod seeds;
pub mod stages;

pub use config::{parse_config, PipelineConfig};
pub use pipeline::{digest_tree, run_pipeline, RunReport, StageError};
