pub mod cli;
pub mod commands;
pub mod config;
pub mod error;
pub mod import;

pub use cli::Cli;
pub use commands::run;
pub use config::PipelineConfig;
pub use error::{CliError, Result};
