//! Agent, environment and training-run settings.

use serde::{Deserialize, Serialize};

use crate::HdrlError;
use ris_core::{BlockageModel, GeometryConfig, LinkBudget, MobilityModel};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AgentConfig {
    pub gamma: f64,
    pub lr_actor: f64,
    pub lr_critic: f64,
    pub tau: f64,
    pub batch: usize,
    pub hidden: [usize; 2],
    /// Exploration σ at the first episode.
    pub noise_start: f64,
    /// Exploration σ once the decay window has passed.
    pub noise_end: f64,
    /// Fraction of the episode budget over which σ decays linearly.
    pub noise_decay_fraction: f64,
    /// Penalty P subtracted when the minimum user rate falls below R_min.
    pub penalty_p: f64,
    /// Slots per macro-slot (T).
    pub macro_len: usize,
    /// Slot duration t′ in seconds; informational.
    pub slot_duration: f64,
    pub meta_buffer: usize,
    pub sub_buffer: usize,
    /// U(−s, s) initialization scale of actor output layers.
    pub actor_init_scale: f64,
    /// Rewards are multiplied by this before entering replay buffers.
    pub reward_scale: f64,
    /// Standardize rewards with running statistics before scaling.
    pub normalize_rewards: bool,
    /// Penalty on the squared norm of tanh actor outputs, keeping them out of saturation.
    pub action_l2: f64,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            lr_actor: 1e-4,
            lr_critic: 1e-4,
            tau: 0.005,
            batch: 64,
            hidden: [256, 256],
            noise_start: 0.3,
            noise_end: 0.02,
            noise_decay_fraction: 0.6,
            penalty_p: 10.0,
            macro_len: 10,
            slot_duration: 0.5e-3,
            meta_buffer: 500,
            sub_buffer: 400,
            actor_init_scale: 1e-3,
            reward_scale: 1.0,
            normalize_rewards: true,
            action_l2: 1.0,
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<(), HdrlError> {
        let bad = |m: String| Err(HdrlError::Config(m));
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return bad(format!("gamma must lie in (0, 1), got {}", self.gamma));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return bad(format!("tau must lie in (0, 1], got {}", self.tau));
        }
        if self.macro_len == 0 {
            return bad("macro_len must be at least 1".into());
        }
        if self.batch == 0 || self.meta_buffer == 0 || self.sub_buffer == 0 {
            return bad("batch and buffer sizes must be positive".into());
        }
        if self.hidden.contains(&0) {
            return bad("hidden widths must be positive".into());
        }
        if !(self.action_l2 >= 0.0) {
            return bad(format!("action_l2 must be non-negative, got {}", self.action_l2));
        }
        if !(self.penalty_p >= 0.0) || !(self.reward_scale > 0.0) {
            return bad("penalty_p must be non-negative and reward_scale positive".into());
        }
        if !(self.noise_start >= 0.0 && self.noise_end >= 0.0 && self.noise_decay_fraction > 0.0) {
            return bad("noise schedule must be non-negative with a positive decay window".into());
        }
        Ok(())
    }

    /// Linear decay from `noise_start` to `noise_end` over the first
    /// `noise_decay_fraction` of `episodes`, flat afterwards.
    pub fn noise_std(&self, episode: usize, episodes: usize) -> f64 {
        let window = self.noise_decay_fraction * episodes as f64;
        let frac = if window <= 0.0 { 1.0 } else { (episode as f64 / window).min(1.0) };
        self.noise_start + (self.noise_end - self.noise_start) * frac
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnvConfig {
    pub geometry: GeometryConfig,
    pub budget: LinkBudget,
    pub blockage: BlockageModel,
    pub mobility: MobilityModel,
    /// Per-slot correlation of the fast-fading path gains.
    pub fading_rho: f64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            geometry: GeometryConfig::default(),
            budget: LinkBudget { p_max: 1.0, sigma2: 1e-5, r_min: 2.0 },
            blockage: BlockageModel::default(),
            mobility: MobilityModel::default(),
            fading_rho: 0.95,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<(), HdrlError> {
        self.geometry.validate()?;
        self.budget.validate()?;
        self.blockage.validate()?;
        if !(0.0..=1.0).contains(&self.fading_rho) {
            return Err(HdrlError::Config(format!("fading_rho must lie in [0, 1], got {}", self.fading_rho)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub episodes: usize,
    pub macro_slots_per_episode: usize,
    /// Greedy evaluation cadence in episodes; 0 disables evaluation.
    pub eval_every: usize,
    pub eval_seeds: usize,
    /// Base of the held-out environment seed stream.
    pub eval_seed_base: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { episodes: 2000, macro_slots_per_episode: 1, eval_every: 50, eval_seeds: 20, eval_seed_base: 0xE7A1 }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), HdrlError> {
        if self.macro_slots_per_episode == 0 {
            return Err(HdrlError::Config("an episode needs at least one macro-slot".into()));
        }
        if self.eval_every > 0 && self.eval_seeds == 0 {
            return Err(HdrlError::Config("evaluation enabled with zero held-out seeds".into()));
        }
        Ok(())
    }

    /// Whether the (0-based) episode ends with a greedy evaluation.
    pub fn evaluates_after(&self, episode: usize) -> bool {
        self.eval_every > 0 && (episode + 1).is_multiple_of(self.eval_every)
    }
}
