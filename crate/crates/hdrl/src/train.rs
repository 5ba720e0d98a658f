//! Training loops, greedy evaluation and the beam-sweep reference.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::buffer::{ReplayBuffer, RewardNormalizer, Transition};
use crate::config::{AgentConfig, EnvConfig, TrainConfig};
use crate::controllers::{
    decode_flat_action, flat_select_action, high_reward, low_reward, low_state, meta_select_goal, sub_select_action,
    Goal, HighState,
};
use crate::ddpg::{ddpg_update, Ddpg, UpdateStats};
use crate::env::{eval_seeds, roll_many, train_env_seed, EpisodeTrace};
use crate::HdrlError;
use ris_core::par::{self, Exec};
use ris_core::{beam_sweep_with, seed, BeamCodebook, ChannelRealization, LinkBudget, PhaseCodebook, PhaseConfig, Precoder};
use ris_encoder::ChannelEncoder;
use ris_learn::{Activation, Checkpoint};

pub const LOG_CSV_HEADER: &str = "episode,cum_reward,eval_sum_se,critic_loss,actor_loss,violations";
pub const HDRL_KIND: &str = "fm-hdrl-agent";
pub const DRL_KIND: &str = "fm-drl-agent";

/// Training episodes are rolled ahead in chunks of this many traces.
const ROLL_CHUNK: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algo {
    FmHdrl,
    FmDrl,
}

impl Algo {
    pub fn name(self) -> &'static str {
        match self {
            Algo::FmHdrl => "fm-hdrl",
            Algo::FmDrl => "fm-drl",
        }
    }
}

impl fmt::Display for Algo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algo {
    type Err = HdrlError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "fm-hdrl" => Ok(Algo::FmHdrl),
            "fm-drl" => Ok(Algo::FmDrl),
            other => Err(HdrlError::Config(format!("unknown algorithm {other:?} (expected fm-hdrl or fm-drl)"))),
        }
    }
}

/// Problem sizes shared by the agents: BS antennas, RIS elements, users, embedding width.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub n: usize,
    pub m: usize,
    pub k: usize,
    pub d_e: usize,
}

impl Dims {
    /// Checks that the encoder was built for this geometry's (M+1)×N channel matrices.
    pub fn new(env: &EnvConfig, encoder: &ChannelEncoder) -> Result<Self, HdrlError> {
        let g = &env.geometry;
        let cfg = encoder.config();
        let expected = 2 * (g.n_ris_elements + 1) * g.n_bs_antennas;
        if cfg.n_patches * cfg.patch_len != expected {
            return Err(HdrlError::Dimension {
                what: "encoder input size",
                expected,
                got: cfg.n_patches * cfg.patch_len,
            });
        }
        Ok(Self { n: g.n_bs_antennas, m: g.n_ris_elements, k: g.n_users, d_e: encoder.d_e() })
    }

    pub fn high_state_dim(&self) -> usize {
        HighState::dim(self.k)
    }

    pub fn low_state_dim(&self) -> usize {
        self.k * self.d_e + self.k
    }

    pub fn low_action_dim(&self) -> usize {
        2 * self.n * self.k + self.m
    }

    pub fn flat_state_dim(&self) -> usize {
        self.k * self.d_e + 3 * self.k
    }

    pub fn flat_action_dim(&self) -> usize {
        self.k + self.low_action_dim()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlotMetrics {
    pub sum_se: f64,
    pub min_rate: f64,
    pub violated: bool,
    /// Unscaled low-level reward r^l.
    pub reward: f64,
}

fn slot_metrics(
    trace: &EpisodeTrace,
    slot: usize,
    goal: &Goal,
    w: &Precoder,
    theta: &PhaseConfig,
    budget: &LinkBudget,
    penalty_p: f64,
) -> Result<SlotMetrics, HdrlError> {
    let report = ris_core::evaluate(&trace.realizations[slot], &goal.modes(), w, theta, budget)?;
    Ok(SlotMetrics {
        sum_se: report.sum_rate,
        min_rate: report.min_rate,
        violated: report.fairness_violated,
        reward: low_reward(&report, budget.r_min, penalty_p),
    })
}

/// Reward entering a replay buffer, normalized with the statistics of the
/// rewards stored before it.
pub fn stored_reward(cfg: &AgentConfig, stats: &RewardNormalizer, raw: f64) -> f64 {
    let r = if cfg.normalize_rewards { stats.normalize(raw) } else { raw };
    cfg.reward_scale * r
}

/// A policy that can be replayed without exploration on a pre-rolled trace.
pub trait Policy: Sync {
    fn greedy_rollout(&self, trace: &EpisodeTrace) -> Result<Vec<SlotMetrics>, HdrlError>;
}

/// Mean per-slot sum SE of the greedy policy over every acted slot of `traces`.
pub fn evaluate<P: Policy + ?Sized>(policy: &P, exec: Exec, traces: &[EpisodeTrace]) -> Result<f64, HdrlError> {
    let per_trace = par::try_map_indexed(exec, traces.len(), |i| policy.greedy_rollout(&traces[i]))?;
    Ok(mean(per_trace.iter().flatten().map(|s| s.sum_se)))
}

/// Mean per-slot sum SE of the codebook sweep over the acted slots of `traces`.
pub fn sweep_baseline(
    exec: Exec,
    traces: &[EpisodeTrace],
    bs: &BeamCodebook,
    ris: &PhaseCodebook,
    budget: &LinkBudget,
) -> Result<f64, HdrlError> {
    let slots: Vec<&[ChannelRealization]> = traces.iter().map(|t| t.acted()).collect();
    let per_slot = sweep_slots(exec, &slots, bs, ris, budget)?;
    Ok(mean(per_slot.iter().flatten().copied()))
}

/// Sweep sum SE of every slot of every trace, in order.
pub fn sweep_slots(
    exec: Exec,
    traces: &[&[ChannelRealization]],
    bs: &BeamCodebook,
    ris: &PhaseCodebook,
    budget: &LinkBudget,
) -> Result<Vec<Vec<f64>>, HdrlError> {
    par::try_map_indexed(exec, traces.len(), |i| {
        traces[i]
            .iter()
            .map(|r| Ok(beam_sweep_with(Exec::Sequential, r, bs, ris, budget)?.report.sum_rate))
            .collect::<Result<Vec<f64>, HdrlError>>()
    })
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        sum / n as f64
    }
}

/// Everything produced while one macro-slot is played.
#[derive(Debug, Clone)]
pub struct MacroOutcome {
    pub goal: Goal,
    pub meta: Transition,
    pub subs: Vec<Transition>,
    pub slots: Vec<SlotMetrics>,
    /// Sub-controller updates performed during the macro-slot.
    pub sub_updates: Vec<UpdateStats>,
    pub meta_update: Option<UpdateStats>,
}

/// Meta-controller and sub-controller with their replay buffers.
#[derive(Debug, Clone)]
pub struct HdrlAgent {
    pub meta: Ddpg,
    pub sub: Ddpg,
    pub meta_buffer: ReplayBuffer,
    pub sub_buffer: ReplayBuffer,
    rewards: RewardNormalizer,
    cfg: AgentConfig,
    budget: LinkBudget,
    dims: Dims,
}

impl HdrlAgent {
    pub fn new<R: Rng + ?Sized>(dims: Dims, cfg: &AgentConfig, budget: LinkBudget, rng: &mut R) -> Result<Self, HdrlError> {
        cfg.validate()?;
        let meta = Ddpg::new(dims.high_state_dim(), dims.k, Activation::Sigmoid, cfg, rng)?;
        let sub = Ddpg::new(dims.low_state_dim(), dims.low_action_dim(), Activation::Tanh, cfg, rng)?;
        Ok(Self::assemble(meta, sub, dims, cfg, budget))
    }

    fn assemble(meta: Ddpg, sub: Ddpg, dims: Dims, cfg: &AgentConfig, budget: LinkBudget) -> Self {
        Self {
            meta,
            sub,
            meta_buffer: ReplayBuffer::new(cfg.meta_buffer),
            sub_buffer: ReplayBuffer::new(cfg.sub_buffer),
            rewards: RewardNormalizer::default(),
            cfg: *cfg,
            budget,
            dims,
        }
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn config(&self) -> &AgentConfig {
        &self.cfg
    }

    fn sub_slot<R: Rng + ?Sized>(
        &self,
        trace: &EpisodeTrace,
        slot: usize,
        goal: &Goal,
        noise_std: f64,
        rng: &mut R,
    ) -> Result<(Transition, SlotMetrics), HdrlError> {
        let Dims { n, m, k, .. } = self.dims;
        let state = low_state(&trace.embeddings[slot], goal);
        let (w, theta, raw) = sub_select_action(&state, &self.sub.actor, noise_std, n, k, m, self.budget.p_max, rng)?;
        let metrics = slot_metrics(trace, slot, goal, &w, &theta, &self.budget, self.cfg.penalty_p)?;
        let t = Transition {
            state,
            action: raw,
            reward: stored_reward(&self.cfg, &self.rewards, metrics.reward),
            next_state: low_state(&trace.embeddings[slot + 1], goal),
        };
        Ok((t, metrics))
    }

    fn meta_transition(trace: &EpisodeTrace, macro_index: usize, goal_values: Vec<f64>, subs: &[Transition]) -> Result<Transition, HdrlError> {
        let rewards: Vec<f64> = subs.iter().map(|t| t.reward).collect();
        Ok(Transition {
            state: trace.high_states[macro_index].to_vec(),
            action: goal_values,
            reward: high_reward(&rewards)?,
            next_state: trace.high_states[macro_index + 1].to_vec(),
        })
    }

    /// Plays macro-slot `macro_index` of `trace`. With `learn` set, every sub
    /// transition is stored and followed by a sub-controller update, and the
    /// meta transition is stored and followed by a meta-controller update.
    pub fn run_macro_slot<R: Rng + ?Sized>(
        &mut self,
        trace: &EpisodeTrace,
        macro_index: usize,
        noise_std: f64,
        learn: bool,
        rng: &mut R,
    ) -> Result<MacroOutcome, HdrlError> {
        if macro_index >= trace.macro_slots() {
            return Err(HdrlError::Dimension { what: "macro-slot index", expected: trace.macro_slots(), got: macro_index });
        }
        let (goal, goal_values) = meta_select_goal(&trace.high_states[macro_index], &self.meta.actor, noise_std, rng)?;
        let mut subs = Vec::with_capacity(trace.macro_len);
        let mut slots = Vec::with_capacity(trace.macro_len);
        let mut sub_updates = Vec::new();
        for slot in macro_index * trace.macro_len..(macro_index + 1) * trace.macro_len {
            let (t, metrics) = self.sub_slot(trace, slot, &goal, noise_std, rng)?;
            if learn {
                self.rewards.observe(metrics.reward);
                self.sub_buffer.push(t.clone());
                if let Some(u) = ddpg_update(&mut self.sub, &self.sub_buffer, rng)? {
                    sub_updates.push(u);
                }
            }
            subs.push(t);
            slots.push(metrics);
        }
        let meta = Self::meta_transition(trace, macro_index, goal_values, &subs)?;
        let mut meta_update = None;
        if learn {
            self.meta_buffer.push(meta.clone());
            meta_update = ddpg_update(&mut self.meta, &self.meta_buffer, rng)?;
        }
        Ok(MacroOutcome { goal, meta, subs, slots, sub_updates, meta_update })
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut tensors = self.meta.to_tensors("meta");
        tensors.extend(self.sub.to_tensors("sub"));
        let meta = serde_json::json!({ "dims": self.dims, "agent": self.cfg, "budget": self.budget });
        Checkpoint::new(HDRL_KIND, meta, tensors)
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self, HdrlError> {
        ck.expect_kind(HDRL_KIND)?;
        let (dims, cfg, budget) = checkpoint_meta(ck)?;
        let meta = Ddpg::from_tensors("meta", dims.high_state_dim(), dims.k, Activation::Sigmoid, &cfg, &ck.tensors)?;
        let sub = Ddpg::from_tensors(
            "sub",
            dims.low_state_dim(),
            dims.low_action_dim(),
            Activation::Tanh,
            &cfg,
            &ck.tensors,
        )?;
        Ok(Self::assemble(meta, sub, dims, &cfg, budget))
    }
}

fn checkpoint_meta(ck: &Checkpoint) -> Result<(Dims, AgentConfig, LinkBudget), HdrlError> {
    let field = |name: &str| {
        ck.meta.get(name).cloned().ok_or_else(|| HdrlError::Config(format!("agent checkpoint lacks {name:?}")))
    };
    let parse = |e: serde_json::Error| HdrlError::Config(format!("agent checkpoint meta: {e}"));
    Ok((
        serde_json::from_value(field("dims")?).map_err(parse)?,
        serde_json::from_value(field("agent")?).map_err(parse)?,
        serde_json::from_value(field("budget")?).map_err(parse)?,
    ))
}

impl Policy for HdrlAgent {
    fn greedy_rollout(&self, trace: &EpisodeTrace) -> Result<Vec<SlotMetrics>, HdrlError> {
        // noise 0 draws nothing, so the generator is never consulted
        let mut rng = seed::rng(0);
        let mut out = Vec::with_capacity(trace.acted_slots());
        for j in 0..trace.macro_slots() {
            let (goal, _) = meta_select_goal(&trace.high_states[j], &self.meta.actor, 0.0, &mut rng)?;
            for slot in j * trace.macro_len..(j + 1) * trace.macro_len {
                out.push(self.sub_slot(trace, slot, &goal, 0.0, &mut rng)?.1);
            }
        }
        Ok(out)
    }
}

/// Single DDPG agent over the joint (modes, precoder, phases) action.
#[derive(Debug, Clone)]
pub struct DrlAgent {
    pub agent: Ddpg,
    pub buffer: ReplayBuffer,
    rewards: RewardNormalizer,
    cfg: AgentConfig,
    budget: LinkBudget,
    dims: Dims,
}

impl DrlAgent {
    pub fn new<R: Rng + ?Sized>(dims: Dims, cfg: &AgentConfig, budget: LinkBudget, rng: &mut R) -> Result<Self, HdrlError> {
        cfg.validate()?;
        let agent = Ddpg::new(dims.flat_state_dim(), dims.flat_action_dim(), Activation::Tanh, cfg, rng)?;
        Ok(Self { agent, buffer: ReplayBuffer::new(cfg.sub_buffer), rewards: RewardNormalizer::default(), cfg: *cfg, budget, dims })
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    /// Embeddings of the slot followed by the high-level state of its macro-slot.
    pub fn state(trace: &EpisodeTrace, slot: usize) -> Vec<f64> {
        let mut s = trace.embeddings[slot].clone();
        s.extend(trace.high_states[slot / trace.macro_len].to_vec());
        s
    }

    fn act<R: Rng + ?Sized>(
        &self,
        trace: &EpisodeTrace,
        slot: usize,
        noise_std: f64,
        rng: &mut R,
    ) -> Result<(Transition, SlotMetrics), HdrlError> {
        let Dims { n, m, k, .. } = self.dims;
        let state = Self::state(trace, slot);
        let raw = flat_select_action(&state, &self.agent.actor, noise_std, rng)?;
        let (goal, w, theta) = decode_flat_action(&raw, n, k, m, self.budget.p_max)?;
        let metrics = slot_metrics(trace, slot, &goal, &w, &theta, &self.budget, self.cfg.penalty_p)?;
        let t = Transition {
            state,
            action: raw,
            reward: stored_reward(&self.cfg, &self.rewards, metrics.reward),
            next_state: Self::state(trace, slot + 1),
        };
        Ok((t, metrics))
    }

    /// Plays one slot; with `learn` set the transition is stored and an update follows.
    pub fn run_slot<R: Rng + ?Sized>(
        &mut self,
        trace: &EpisodeTrace,
        slot: usize,
        noise_std: f64,
        learn: bool,
        rng: &mut R,
    ) -> Result<(Transition, SlotMetrics, Option<UpdateStats>), HdrlError> {
        let (t, metrics) = self.act(trace, slot, noise_std, rng)?;
        let mut update = None;
        if learn {
            self.rewards.observe(metrics.reward);
            self.buffer.push(t.clone());
            update = ddpg_update(&mut self.agent, &self.buffer, rng)?;
        }
        Ok((t, metrics, update))
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let meta = serde_json::json!({ "dims": self.dims, "agent": self.cfg, "budget": self.budget });
        Checkpoint::new(DRL_KIND, meta, self.agent.to_tensors("flat"))
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self, HdrlError> {
        ck.expect_kind(DRL_KIND)?;
        let (dims, cfg, budget) = checkpoint_meta(ck)?;
        let agent = Ddpg::from_tensors(
            "flat",
            dims.flat_state_dim(),
            dims.flat_action_dim(),
            Activation::Tanh,
            &cfg,
            &ck.tensors,
        )?;
        Ok(Self { agent, buffer: ReplayBuffer::new(cfg.sub_buffer), rewards: RewardNormalizer::default(), cfg, budget, dims })
    }
}

impl Policy for DrlAgent {
    fn greedy_rollout(&self, trace: &EpisodeTrace) -> Result<Vec<SlotMetrics>, HdrlError> {
        let mut rng = seed::rng(0);
        (0..trace.acted_slots()).map(|s| Ok(self.act(trace, s, 0.0, &mut rng)?.1)).collect()
    }
}

#[derive(Debug, Clone)]
pub enum TrainedAgent {
    Hdrl(HdrlAgent),
    Drl(DrlAgent),
}

impl TrainedAgent {
    pub fn algo(&self) -> Algo {
        match self {
            TrainedAgent::Hdrl(_) => Algo::FmHdrl,
            TrainedAgent::Drl(_) => Algo::FmDrl,
        }
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        match self {
            TrainedAgent::Hdrl(a) => a.to_checkpoint(),
            TrainedAgent::Drl(a) => a.to_checkpoint(),
        }
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self, HdrlError> {
        match ck.kind.as_str() {
            HDRL_KIND => Ok(TrainedAgent::Hdrl(HdrlAgent::from_checkpoint(ck)?)),
            _ => Ok(TrainedAgent::Drl(DrlAgent::from_checkpoint(ck)?)),
        }
    }
}

impl Policy for TrainedAgent {
    fn greedy_rollout(&self, trace: &EpisodeTrace) -> Result<Vec<SlotMetrics>, HdrlError> {
        match self {
            TrainedAgent::Hdrl(a) => a.greedy_rollout(trace),
            TrainedAgent::Drl(a) => a.greedy_rollout(trace),
        }
    }
}

/// One row of the training log. Loss columns are means over the episode's
/// updates (sub-controller updates for the hierarchical agent) and are empty
/// before the replay buffer holds a full batch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeLog {
    pub episode: usize,
    /// Sum of unscaled low-level rewards over the episode.
    pub cum_reward: f64,
    pub eval_sum_se: Option<f64>,
    pub critic_loss: Option<f64>,
    pub actor_loss: Option<f64>,
    /// Slots whose minimum rate fell below R_min.
    pub violations: usize,
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl EpisodeLog {
    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.episode,
            self.cum_reward,
            opt(self.eval_sum_se),
            opt(self.critic_loss),
            opt(self.actor_loss),
            self.violations
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingLog {
    pub algo: Algo,
    pub rows: Vec<EpisodeLog>,
}

impl TrainingLog {
    pub fn rewards(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.cum_reward).collect()
    }

    /// (episode, eval SE) pairs in episode order.
    pub fn evals(&self) -> Vec<(usize, f64)> {
        self.rows.iter().filter_map(|r| r.eval_sum_se.map(|e| (r.episode, e))).collect()
    }

    /// Mean of the evaluation points logged within the last `window` episodes.
    pub fn final_eval(&self, window: usize) -> Option<f64> {
        let last = self.rows.last()?.episode;
        let pts: Vec<f64> =
            self.evals().into_iter().filter(|(e, _)| e + window > last).map(|(_, v)| v).collect();
        (!pts.is_empty()).then(|| pts.iter().sum::<f64>() / pts.len() as f64)
    }
}

/// First episode count at which the trailing `window`-episode mean reward
/// reaches `init + fraction·(final − init)`; `init` is the mean of the first
/// `window` episodes, `final` the mean of the last `final_window`.
pub fn episodes_to_fraction(rewards: &[f64], window: usize, final_window: usize, fraction: f64) -> Option<usize> {
    if window == 0 || final_window == 0 || rewards.len() < window.max(final_window) {
        return None;
    }
    let avg = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
    let init = avg(&rewards[..window]);
    let fin = avg(&rewards[rewards.len() - final_window..]);
    let target = init + fraction * (fin - init);
    let rising = fin >= init;
    (window - 1..rewards.len())
        .find(|&i| {
            let ma = avg(&rewards[i + 1 - window..=i]);
            if rising {
                ma >= target
            } else {
                ma <= target
            }
        })
        .map(|i| i + 1)
}

/// Held-out traces used for every evaluation of a run.
pub fn eval_traces(
    exec: Exec,
    env: &EnvConfig,
    encoder: &ChannelEncoder,
    agent: &AgentConfig,
    train: &TrainConfig,
) -> Result<Vec<EpisodeTrace>, HdrlError> {
    let seeds = eval_seeds(train.eval_seed_base, train.eval_seeds);
    roll_many(exec, env, encoder, &seeds, train.macro_slots_per_episode, agent.macro_len)
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub log: TrainingLog,
    pub agent: TrainedAgent,
}

/// Trains `algo` for `train.episodes` episodes. Episode `e` replays the
/// environment seeded by `train_env_seed(run_seed, e)`, so both algorithms
/// trained under the same run seed see identical channels. `on_episode` is
/// called with each log row as soon as it is complete.
#[allow(clippy::too_many_arguments)]
pub fn train(
    algo: Algo,
    env: &EnvConfig,
    agent_cfg: &AgentConfig,
    train_cfg: &TrainConfig,
    encoder: &ChannelEncoder,
    run_seed: u64,
    exec: Exec,
    on_episode: &mut dyn FnMut(&EpisodeLog) -> Result<(), HdrlError>,
) -> Result<TrainOutcome, HdrlError> {
    env.validate()?;
    agent_cfg.validate()?;
    train_cfg.validate()?;
    let dims = Dims::new(env, encoder)?;
    let mut init_rng = seed::rng(seed::derive(run_seed, 1));
    let mut rng = seed::rng(seed::derive(run_seed, 2));
    let mut agent = match algo {
        Algo::FmHdrl => TrainedAgent::Hdrl(HdrlAgent::new(dims, agent_cfg, env.budget, &mut init_rng)?),
        Algo::FmDrl => TrainedAgent::Drl(DrlAgent::new(dims, agent_cfg, env.budget, &mut init_rng)?),
    };
    let mut rows = Vec::with_capacity(train_cfg.episodes);
    if train_cfg.episodes == 0 {
        return Ok(TrainOutcome { log: TrainingLog { algo, rows }, agent });
    }
    let held_out =
        if train_cfg.eval_every > 0 { eval_traces(exec, env, encoder, agent_cfg, train_cfg)? } else { Vec::new() };
    let (s, t) = (train_cfg.macro_slots_per_episode, agent_cfg.macro_len);
    for chunk_start in (0..train_cfg.episodes).step_by(ROLL_CHUNK) {
        let chunk_end = (chunk_start + ROLL_CHUNK).min(train_cfg.episodes);
        let seeds: Vec<u64> = (chunk_start..chunk_end).map(|e| train_env_seed(run_seed, e)).collect();
        let traces = roll_many(exec, env, encoder, &seeds, s, t)?;
        for (episode, trace) in (chunk_start..chunk_end).zip(&traces) {
            let noise = agent_cfg.noise_std(episode, train_cfg.episodes);
            let mut metrics = Vec::with_capacity(trace.acted_slots());
            let mut updates = Vec::new();
            match &mut agent {
                TrainedAgent::Hdrl(a) => {
                    for j in 0..trace.macro_slots() {
                        let out = a.run_macro_slot(trace, j, noise, true, &mut rng)?;
                        metrics.extend(out.slots);
                        updates.extend(out.sub_updates);
                    }
                }
                TrainedAgent::Drl(a) => {
                    for slot in 0..trace.acted_slots() {
                        let (_, m, u) = a.run_slot(trace, slot, noise, true, &mut rng)?;
                        metrics.push(m);
                        updates.extend(u);
                    }
                }
            }
            let eval_sum_se =
                if train_cfg.evaluates_after(episode) { Some(evaluate(&agent, exec, &held_out)?) } else { None };
            let row = EpisodeLog {
                episode,
                cum_reward: metrics.iter().map(|m| m.reward).sum(),
                eval_sum_se,
                critic_loss: (!updates.is_empty()).then(|| mean(updates.iter().map(|u| u.critic_loss))),
                actor_loss: (!updates.is_empty()).then(|| mean(updates.iter().map(|u| u.actor_loss))),
                violations: metrics.iter().filter(|m| m.violated).count(),
            };
            on_episode(&row)?;
            rows.push(row);
        }
    }
    Ok(TrainOutcome { log: TrainingLog { algo, rows }, agent })
}
