//! Configuration and pipeline drivers behind the `autorig` binary.

pub mod config;
pub mod pipeline;

pub use config::{ConfigError, Method, PipelineConfig, TemplateSource};
pub use pipeline::{run_method1, run_method2, run_pose, PipelineError};
