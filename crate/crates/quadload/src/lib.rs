//! Host-side companion of `quadload-core`: run configuration, checkpoint
//! files, parallel training drivers, evaluation output, the live telemetry
//! bridge and the `quadload` command line.

pub mod bridge;
pub mod checkpoint;
pub mod config;
pub mod evalio;
pub mod executor;
pub mod train;

pub use checkpoint::{Checkpoint, Manifest};
pub use config::RunConfig;
pub use executor::RayonExecutor;

/// Process exit codes of the command line.
pub mod exit {
    pub const OK: i32 = 0;
    pub const IO: i32 = 1;
    pub const CONFIG: i32 = 2;
    pub const CHECKPOINT_MISMATCH: i32 = 3;
    pub const DIVERGED: i32 = 4;
    pub const SCENARIO: i32 = 5;
    pub const BIND: i32 = 6;
    pub const CORRUPT_CHECKPOINT: i32 = 7;
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("config error: {0}")]
    Config(String),
    #[error("checkpoint mismatch: {0}")]
    CheckpointMismatch(String),
    #[error("corrupt checkpoint: {0}")]
    CorruptCheckpoint(String),
    #[error("training diverged: {0}")]
    Diverged(String),
    #[error("scenario error: {0}")]
    Scenario(String),
    #[error("cannot bind {addr}: {source}")]
    Bind { addr: String, source: std::io::Error },
    #[error("{context}: {source}")]
    Io { context: String, source: std::io::Error },
    #[error("{0}")]
    Other(String),
}

impl Error {
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => exit::CONFIG,
            Error::CheckpointMismatch(_) => exit::CHECKPOINT_MISMATCH,
            Error::CorruptCheckpoint(_) => exit::CORRUPT_CHECKPOINT,
            Error::Diverged(_) => exit::DIVERGED,
            Error::Scenario(_) => exit::SCENARIO,
            Error::Bind { .. } => exit::BIND,
            Error::Io { .. } | Error::Other(_) => exit::IO,
        }
    }

    pub(crate) fn io(context: impl std::fmt::Display, source: std::io::Error) -> Self {
        Error::Io { context: context.to_string(), source }
    }
}
