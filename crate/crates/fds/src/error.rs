use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum FdsError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
    /// A manifest or config field failed validation; `field` is a dotted path.
    #[error("{field}: {message}")]
    Invalid { field: String, message: String },
    /// The scene on disk does not match its manifest.
    #[error("{field}: {message}")]
    Scene { field: String, message: String },
    #[error("{path}: missing prior flow file")]
    MissingFlow { path: PathBuf },
    #[error(transparent)]
    Core(#[from] fds_core::Error),
}

pub type Result<T> = std::result::Result<T, FdsError>;

impl FdsError {
    pub fn io(path: &Path, source: io::Error) -> Self {
        FdsError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn format(path: &Path, message: impl Into<String>) -> Self {
        FdsError::Format {
            path: path.to_path_buf(),
            message: message.into(),
        }
    }

    pub fn scene(field: impl Into<String>, message: impl Into<String>) -> Self {
        FdsError::Scene {
            field: field.into(),
            message: message.into(),
        }
    }

    pub fn invalid(field: impl Into<String>, message: impl Into<String>) -> Self {
        FdsError::Invalid {
            field: field.into(),
            message: message.into(),
        }
    }

    /// 2 usage, 3 I/O or bad input files, 4 numerical failure.
    pub fn exit_code(&self) -> i32 {
        use fds_core::Error as E;
        match self {
            FdsError::Usage(_) | FdsError::Invalid { .. } => 2,
            FdsError::Io { .. }
            | FdsError::Format { .. }
            | FdsError::Scene { .. }
            | FdsError::MissingFlow { .. } => 3,
            FdsError::Core(E::NonFinite(_)) => 4,
            FdsError::Core(E::MissingGroundTruth(_) | E::PriorUnavailable { .. }) => 3,
            FdsError::Core(E::ShapeMismatch { .. }) => 3,
            FdsError::Core(_) => 2,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            FdsError::Usage(_) => "usage",
            FdsError::Io { .. } => "io",
            FdsError::Format { .. } => "format",
            FdsError::Invalid { .. } => "invalid",
            FdsError::Scene { .. } => "scene",
            FdsError::MissingFlow { .. } => "missing_flow",
            FdsError::Core(fds_core::Error::NonFinite(_)) => "non_finite",
            FdsError::Core(_) => "core",
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        let mut v = serde_json::json!({
            "error": self.kind(),
            "message": self.to_string(),
            "exit_code": self.exit_code(),
        });
        match self {
            FdsError::Io { path, .. }
            | FdsError::Format { path, .. }
            | FdsError::MissingFlow { path } => {
                v["path"] = path.display().to_string().into();
            }
            FdsError::Invalid { field, .. } | FdsError::Scene { field, .. } => {
                v["field"] = field.clone().into()
            }
            _ => {}
        }
        v
    }
}
