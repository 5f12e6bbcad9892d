use std::path::PathBuf;

/// Errors produced by the solvers, the scenario loader and the CLI driver.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("switching operator is undefined for the final state {0}")]
    NoSwitchDestination(String),

    #[error("non-finite value produced at time level {level}, state {state}")]
    NumericFailure { level: usize, state: String },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("internal invariant violated: {0}")]
    Invariant(String),

    #[error("scenario parse error at line {line}, column {column} (field `{path}`): {message}")]
    Parse {
        line: usize,
        column: usize,
        path: String,
        message: String,
    },

    #[error("invalid scenario: {0}")]
    Validation(String),

    #[error("missing artifact {}: run `{needed}` on this output directory first", path.display())]
    MissingArtifact { path: PathBuf, needed: String },

    #[error("malformed artifact {}: {message}", path.display())]
    MalformedArtifact { path: PathBuf, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
