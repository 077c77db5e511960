use thiserror::Error;

pub type Result<T, E = CliError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] emgse_core::Error),

    #[error(transparent)]
    Model(#[from] emgse_model::ModelError),

    #[error("config: {0}")]
    Config(String),

    #[error("import: {0}")]
    Import(String),

    #[error("{0}")]
    Usage(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
