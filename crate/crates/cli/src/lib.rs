//! `lcot` command line: corpus pipeline, search, articles, evaluation,
//! clustering, the HTTP API and the MCP tool server.

pub mod app;
pub mod commands;
pub mod config;
pub mod error;
pub mod lock;
pub mod pipeline;
pub mod serve;

pub use app::{run, Cli};
pub use config::{Config, Loaded};
pub use error::{CliError, CliResult, ErrorKind};
pub use pipeline::{RunManifest, RunOptions, StageStatus, STAGES};
