//! Pipeline stages and the experiment harness behind the `sdfmap` binary.
//!
//! Every stage reads one JSON config (or a previously written manifest, whose
//! embedded config is then reused verbatim), runs, and writes its artifacts
//! plus a manifest into the output directory. Manifests record the fully
//! resolved configuration, input hashes, and seeds; re-running a stage from
//! its manifest with the same inputs reproduces every artifact byte for byte.

pub mod config;
pub mod experiments;
pub mod manifest;
pub mod plot;
pub mod stages;

use thiserror::Error;

/// Stage and harness failures, split by exit code: validation problems exit
/// with 1, runtime failures with 2.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }

    pub fn validation(err: impl std::fmt::Display) -> Self {
        CliError::Validation(err.to_string())
    }

    pub fn runtime(err: impl std::fmt::Display) -> Self {
        CliError::Runtime(err.to_string())
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
