//! Minimal differentiable-function substrate shared by the channel encoder
//! and the DDPG agents: dense networks with explicit activation tapes,
//! reverse-mode gradients, Adam/AdamW, Polyak target updates, a
//! finite-difference gradient checker and a binary checkpoint container.
//!
//! All arithmetic is `f64`.

pub mod checkpoint;
pub mod gradcheck;
pub mod mlp;
pub mod optim;

pub use checkpoint::{Checkpoint, CheckpointError, Tensor};
pub use gradcheck::{check_gradients, rel_err, sample_indices, GradCheckReport, ParamVector};
pub use mlp::{Activation, Dense, Mlp, MlpGrads, MlpSpec, Tape};
pub use optim::{soft_update, Adam, AdamConfig};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LearnError {
    #[error("{what}: expected {expected}, got {got}")]
    Dimension { what: &'static str, expected: usize, got: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
}
