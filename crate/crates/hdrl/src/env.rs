//! Two-timescale environment: fast fading every slot, mobility and blockage
//! every macro-slot.
//!
//! User motion, blockage and fading never depend on the controllers' actions,
//! so an episode's channel sequence (and the frozen encoder's embeddings of
//! it) can be generated up front as an [`EpisodeTrace`] and replayed by any
//! policy.

use crate::controllers::HighState;
use crate::config::EnvConfig;
use crate::HdrlError;
use ris_core::par::{self, Exec};
use ris_core::{seed, spawn_users, step_blockage, step_mobility, ChannelProcess, ChannelRealization, UserState};
use ris_encoder::ChannelEncoder;

#[derive(Debug, Clone)]
pub struct Environment {
    cfg: EnvConfig,
    seed: u64,
    users: Vec<UserState>,
    process: ChannelProcess,
    macro_index: u64,
}

impl Environment {
    pub fn new(cfg: &EnvConfig, env_seed: u64) -> Result<Self, HdrlError> {
        cfg.validate()?;
        let users = spawn_users(&cfg.geometry, &cfg.blockage, &cfg.mobility, seed::derive(env_seed, 0));
        let process = ChannelProcess::new(&cfg.geometry, seed::derive(env_seed, 1))?;
        Ok(Self { cfg: cfg.clone(), seed: env_seed, users, process, macro_index: 0 })
    }

    pub fn users(&self) -> &[UserState] {
        &self.users
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn high_state(&self) -> HighState {
        HighState::observe(&self.users, &self.cfg.geometry.area_bounds)
    }

    /// Advances the fast-fading gains by one slot.
    pub fn advance_fading(&mut self) {
        self.process.advance_fading(self.cfg.fading_rho);
    }

    /// Moves users by one macro-slot and steps every blockage chain.
    pub fn advance_macro(&mut self, macro_len: usize) {
        let s = seed::derive_path(self.seed, &[2, self.macro_index]);
        let moved =
            step_mobility(&self.users, &self.cfg.geometry.area_bounds, macro_len as f64, &self.cfg.mobility, s);
        self.users = step_blockage(&moved, &self.cfg.blockage, seed::derive(s, 1));
        self.macro_index += 1;
    }

    pub fn realize(&self) -> Result<ChannelRealization, HdrlError> {
        Ok(self.process.realize(&self.users)?)
    }
}

/// A pre-rolled episode: `macro_slots·macro_len + 1` slot realizations (the
/// last one only serves as the successor of the final slot) and
/// `macro_slots + 1` high-level states.
#[derive(Debug, Clone)]
pub struct EpisodeTrace {
    pub env_seed: u64,
    pub macro_len: usize,
    pub realizations: Vec<ChannelRealization>,
    /// Flattened K·d_e embeddings, one per realization.
    pub embeddings: Vec<Vec<f64>>,
    pub high_states: Vec<HighState>,
}

impl EpisodeTrace {
    pub fn macro_slots(&self) -> usize {
        self.high_states.len() - 1
    }

    /// Slots that are acted on (excludes the trailing successor slot).
    pub fn acted_slots(&self) -> usize {
        self.macro_slots() * self.macro_len
    }

    pub fn acted(&self) -> &[ChannelRealization] {
        &self.realizations[..self.acted_slots()]
    }
}

/// Rolls an environment forward: every slot advances fading and is then
/// observed; every macro-slot end advances mobility and blockage. Returns the
/// `macro_slots·macro_len + 1` realizations and `macro_slots + 1` high-level states.
pub fn roll_channels(
    cfg: &EnvConfig,
    env_seed: u64,
    macro_slots: usize,
    macro_len: usize,
) -> Result<(Vec<ChannelRealization>, Vec<HighState>), HdrlError> {
    let mut env = Environment::new(cfg, env_seed)?;
    let mut realizations = Vec::with_capacity(macro_slots * macro_len + 1);
    let mut high_states = Vec::with_capacity(macro_slots + 1);
    for _ in 0..macro_slots {
        high_states.push(env.high_state());
        for _ in 0..macro_len {
            env.advance_fading();
            realizations.push(env.realize()?);
        }
        env.advance_macro(macro_len);
    }
    high_states.push(env.high_state());
    env.advance_fading();
    realizations.push(env.realize()?);
    Ok((realizations, high_states))
}

/// [`roll_channels`] plus the frozen encoder's embedding of every realization.
pub fn roll_episode(
    cfg: &EnvConfig,
    encoder: &ChannelEncoder,
    env_seed: u64,
    macro_slots: usize,
    macro_len: usize,
) -> Result<EpisodeTrace, HdrlError> {
    let (realizations, high_states) = roll_channels(cfg, env_seed, macro_slots, macro_len)?;
    let embeddings = realizations.iter().map(|r| encoder.embed_flat(r)).collect::<Result<Vec<_>, _>>()?;
    Ok(EpisodeTrace { env_seed, macro_len, realizations, embeddings, high_states })
}

/// Held-out traces for seeds `derive(base, 0..count)`, built in parallel when enabled.
pub fn roll_many(
    exec: Exec,
    cfg: &EnvConfig,
    encoder: &ChannelEncoder,
    seeds: &[u64],
    macro_slots: usize,
    macro_len: usize,
) -> Result<Vec<EpisodeTrace>, HdrlError> {
    par::try_map_indexed(exec, seeds.len(), |i| roll_episode(cfg, encoder, seeds[i], macro_slots, macro_len))
}

/// Environment seeds of the held-out evaluation set.
pub fn eval_seeds(base: u64, count: usize) -> Vec<u64> {
    (0..count as u64).map(|i| seed::derive_path(base, &[0xE7A1, i])).collect()
}

/// Environment seed of training episode `episode` under run seed `run_seed`.
/// Paired runs of different algorithms with the same run seed see the same channels.
pub fn train_env_seed(run_seed: u64, episode: usize) -> u64 {
    seed::derive_path(run_seed, &[0x7EA1, episode as u64])
}
