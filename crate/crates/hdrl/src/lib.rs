//! Hierarchical control of an RIS-assisted downlink.
//!
//! A meta-controller picks per-user link modes once per macro-slot from user
//! positions and blockage flags; a sub-controller picks the BS precoder and RIS
//! phases every slot from frozen channel-encoder embeddings. Both are DDPG
//! agents. A flat single-agent baseline acting on the joint action space is
//! trained by the same loop.

pub mod buffer;
pub mod config;
pub mod controllers;
pub mod ddpg;
pub mod env;
pub mod train;

use thiserror::Error;

pub use buffer::{ReplayBuffer, RewardNormalizer, Transition};
pub use config::{AgentConfig, EnvConfig, TrainConfig};
pub use controllers::{
    decode_flat_action, decode_low_action, flat_select_action, goal_from_continuous, high_reward, low_reward,
    low_state, meta_select_goal, sub_select_action, Goal, HighState,
};
pub use ddpg::{ddpg_update, Ddpg, UpdateStats};
pub use env::{eval_seeds, roll_channels, roll_episode, roll_many, train_env_seed, EpisodeTrace, Environment};
pub use train::{
    episodes_to_fraction, eval_traces, evaluate, stored_reward, sweep_baseline, sweep_slots, train, Algo, Dims, DrlAgent, EpisodeLog,
    HdrlAgent, MacroOutcome, Policy, SlotMetrics, TrainOutcome, TrainedAgent, TrainingLog, LOG_CSV_HEADER,
};

#[derive(Debug, Error)]
pub enum HdrlError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{what}: expected {expected}, got {got}")]
    Dimension { what: &'static str, expected: usize, got: usize },
    #[error(transparent)]
    Channel(#[from] ris_core::ChannelError),
    #[error(transparent)]
    Signal(#[from] ris_core::SignalError),
    #[error(transparent)]
    Learn(#[from] ris_learn::LearnError),
    #[error(transparent)]
    Checkpoint(#[from] ris_learn::CheckpointError),
    #[error(transparent)]
    Encoder(#[from] ris_encoder::EncoderError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
