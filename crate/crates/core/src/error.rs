use std::path::PathBuf;

/// Errors raised anywhere in the pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid data at {field}: {message}")]
    Validation { field: String, message: String },

    #[error("{path}: parse error at line {line}, column {column}: {message}")]
    Parse {
        path: String,
        line: usize,
        column: usize,
        message: String,
    },

    #[error("scene {scene}: constraints unsatisfiable after {attempts} attempts")]
    Unsatisfiable { scene: usize, attempts: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("tape output is not a scalar (width {0})")]
    NotScalar(usize),

    #[error("non-finite loss at epoch {epoch}, batch {batch} (loss = {loss})")]
    NonFinite {
        epoch: usize,
        batch: usize,
        loss: f64,
    },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn validation(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Validation {
            field: field.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(path: &std::path::Path, err: serde_json::Error) -> Self {
        Error::Parse {
            path: path.display().to_string(),
            line: err.line(),
            column: err.column(),
            message: err.to_string(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
