use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("numerical degeneracy: {0}")]
    Degenerate(String),

    #[error("triangulation degenerate: DOA difference {diff_deg:.3}° is not above {min_deg}°")]
    TriangulationDegenerate { diff_deg: f64, min_deg: f64 },

    #[error("constraints infeasible after {attempts} draws: {reason}")]
    Infeasible { attempts: usize, reason: String },

    #[error("geometry mismatch: {0}")]
    GeometryMismatch(String),

    #[error("malformed {what} at {path}: {reason}")]
    Malformed {
        what: &'static str,
        path: PathBuf,
        reason: String,
    },

    #[error("non-finite loss at batch {batch}: {detail}")]
    NonFiniteLoss { batch: String, detail: String },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Wav {
        path: PathBuf,
        #[source]
        source: hound::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("config: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
