//! Error types shared across the toolkit.

use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum KgcError {
    /// Malformed input data (bad TSV line, bad JSON config, unreadable file).
    #[error("parse error in {path} at line {line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Unknown entity/relation, or a frozen vocabulary was asked to grow.
    #[error("vocabulary error: {0}")]
    Vocab(String),

    /// Corrupt or inconsistent binary artifact (checkpoint, path index, graph bundle).
    #[error("integrity error: {0}")]
    Integrity(String),

    /// Non-finite loss during training.
    #[error("training diverged: {0}")]
    Divergence(String),

    /// A caller violated an operation contract.
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("config error: {0}")]
    Config(String),

    /// Synthetic-graph generation could not satisfy the requested rules.
    #[error("generation error: {0}")]
    Generation(String),
}

impl KgcError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        KgcError::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for the CLI: 0 success, 2 input/parse, 3 vocabulary,
    /// 4 integrity, 5 divergence.
    pub fn exit_code(&self) -> i32 {
        match self {
            KgcError::Parse { .. }
            | KgcError::Io { .. }
            | KgcError::Contract(_)
            | KgcError::Config(_)
            | KgcError::Generation(_) => 2,
            KgcError::Vocab(_) => 3,
            KgcError::Integrity(_) => 4,
            KgcError::Divergence(_) => 5,
        }
    }
}

pub type Result<T> = std::result::Result<T, KgcError>;
