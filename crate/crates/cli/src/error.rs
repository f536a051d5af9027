use std::path::{Path, PathBuf};

use thiserror::Error;
use xar_core::backend::BackendError;
use xar_core::path_monitor::MonitorError;
use xar_core::rag::RagError;
use xar_core::scenario::ScenarioError;
use xar_core::session::SessionError;
use xar_core::vector_store::StoreError;

/// Process exit codes.
pub mod exit {
    pub const OK: u8 = 0;
    pub const INPUT: u8 = 2;
    pub const BACKEND: u8 = 3;
    pub const IO: u8 = 4;
}

#[derive(Debug, Error)]
pub enum AppError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invalid arguments: {0}")]
    Usage(String),
    #[error(transparent)]
    Session(#[from] SessionError),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Monitor(#[from] MonitorError),
    #[error("knowledge base is empty")]
    EmptyStore,
    #[error(transparent)]
    Store(StoreError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot listen on {addr}: {source}")]
    Bind {
        addr: String,
        #[source]
        source: std::io::Error,
    },
}

impl AppError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        AppError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            AppError::Backend(_) => exit::BACKEND,
            AppError::Io { .. } | AppError::Bind { .. } => exit::IO,
            _ => exit::INPUT,
        }
    }
}

impl From<StoreError> for AppError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::EmptyStore => AppError::EmptyStore,
            other => AppError::Store(other),
        }
    }
}

impl From<RagError> for AppError {
    fn from(e: RagError) -> Self {
        match e {
            RagError::EmptyStore => AppError::EmptyStore,
            RagError::Backend(b) => AppError::Backend(b),
            RagError::Store(s) => s.into(),
            RagError::BadTemplate(msg) => AppError::Config(format!("bad template: {msg}")),
            RagError::InvalidK => AppError::Usage("k must be at least 1".into()),
        }
    }
}
