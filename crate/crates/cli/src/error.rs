use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// A configuration value violates a precondition; exit code 2.
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Numeric(#[from] lpsections::Error),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type CliResult<T> = std::result::Result<T, CliError>;

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numeric(lpsections::Error::Domain { .. } | lpsections::Error::Budget { .. }) => 2,
            _ => 1,
        }
    }
}
