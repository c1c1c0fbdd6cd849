use std::path::{Path, PathBuf};

use crate::config::Violation;

/// Process exit codes.
pub mod exit {
    pub const SUCCESS: i32 = 0;
    pub const VALIDATION: i32 = 2;
    pub const STAGE: i32 = 3;
    pub const IO: i32 = 4;
}

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("{} precondition(s) violated: {}", .0.len(), join(.0))]
    Validation(Vec<Violation>),
    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<HarnessError>,
    },
    #[error("missing input {}: run the `{producer}` stage first", path.display())]
    MissingInput { path: PathBuf, producer: &'static str },
    #[error(transparent)]
    Model(#[from] migr_scatter::Error),
    #[error("malformed artifact {}: {detail}", path.display())]
    Artifact { path: PathBuf, detail: String },
    #[error("output directory {} is locked by another run ({})", path.display(), holder)]
    Locked { path: PathBuf, holder: String },
    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn join(v: &[Violation]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; ")
}

impl HarnessError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Parse(_) | HarnessError::Validation(_) => exit::VALIDATION,
            HarnessError::Io { .. } | HarnessError::Locked { .. } => exit::IO,
            HarnessError::Stage { source, .. } => match source.as_ref() {
                HarnessError::Io { .. } => exit::IO,
                _ => exit::STAGE,
            },
            HarnessError::MissingInput { .. } | HarnessError::Model(_) | HarnessError::Artifact { .. } => exit::STAGE,
        }
    }
}

pub type Result<T> = std::result::Result<T, HarnessError>;
