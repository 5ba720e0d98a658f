//! Orchestration for the RIS simulator: dataset generation, encoder training,
//! agent training, codebook sweeps and the experiment families, with CSV and
//! SVG outputs.

pub mod commands;
pub mod config;
pub mod experiment;
pub mod pipeline;
pub mod plot;
pub mod report;

use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

pub use config::{ExperimentConfig, ExperimentKind};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("{}: {message}", path.display())]
    File { path: PathBuf, message: String },
    #[error(transparent)]
    Hdrl(#[from] ris_hdrl::HdrlError),
    #[error(transparent)]
    Encoder(#[from] ris_encoder::EncoderError),
    #[error(transparent)]
    Channel(#[from] ris_core::ChannelError),
    #[error(transparent)]
    Signal(#[from] ris_core::SignalError),
}

impl CliError {
    /// Process exit code: 1 for configuration problems, 2 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            _ => 2,
        }
    }

    pub fn io(path: &Path, source: io::Error) -> Self {
        CliError::Io { path: path.to_path_buf(), source }
    }

    pub fn file(path: &Path, message: impl ToString) -> Self {
        CliError::File { path: path.to_path_buf(), message: message.to_string() }
    }
}
