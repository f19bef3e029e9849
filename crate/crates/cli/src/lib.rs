//! Resumable pipeline driver: one stage per subcommand, file-based hand-off
//! between stages, and a manifest recording what each artifact was built from.

pub mod config;
pub mod error;
pub mod fixture;
pub mod manifest;
pub mod stages;

pub use config::PipelineConfig;
pub use error::PipelineError;
pub use stages::{Outcome, Pipeline, Stage, StageStatus};
