//! Toy channel foundation model.
//!
//! Complex channel matrices are flattened into real patches, encoded by a
//! small pre-norm transformer with a CLS token, pretrained by masked
//! reconstruction, and summarized into a compact embedding through a
//! fine-tuned linear head.

pub mod features;
pub mod model;
pub mod patch;
pub mod targets;
pub mod train;

use thiserror::Error;

pub use features::{embed_channel, user_channel_matrix, ChannelEncoder, Embedding, InputScaling, ENCODER_KIND};
pub use model::{backward, encode, forward, EncoderConfig, EncoderParams, ForwardCache, LayerParams};
pub use patch::{patch_length, patchify, unpatchify, PatchSequence};
pub use targets::{sweep_targets, FinetuneTarget, PcaSketch};
pub use train::{
    draw_mask, finetune, finetune_loss_and_grad, finetune_optimizer, finetune_step, masked_eval_loss,
    masked_loss_and_grads, masked_pretrain_step, pretrain, pretrain_optimizer, write_loss_csv, TrainSchedule,
};

#[derive(Debug, Error)]
pub enum EncoderError {
    #[error("2·X·Y = {total} is not divisible by the patch count {patches}")]
    Indivisible { total: usize, patches: usize },
    #[error("{what}: expected {expected}, got {got}")]
    Dimension { what: &'static str, expected: usize, got: usize },
    #[error("invalid encoder configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Learn(#[from] ris_learn::LearnError),
    #[error(transparent)]
    Checkpoint(#[from] ris_learn::CheckpointError),
    #[error(transparent)]
    Signal(#[from] ris_core::SignalError),
}
