//! Deterministic policy gradient with target networks.

use ndarray::{concatenate, s, Array2, Axis};
use rand::Rng;

use crate::buffer::{ReplayBuffer, Transition};
use crate::config::AgentConfig;
use crate::HdrlError;
use ris_learn::{soft_update, Activation, Adam, AdamConfig, Mlp, MlpGrads, MlpSpec, Tensor};

/// Actor, critic, their targets and optimizers.
#[derive(Debug, Clone)]
pub struct Ddpg {
    pub actor: Mlp,
    pub critic: Mlp,
    pub target_actor: Mlp,
    pub target_critic: Mlp,
    actor_opt: Adam,
    critic_opt: Adam,
    pub gamma: f64,
    pub tau: f64,
    pub batch: usize,
    /// Weight of the mean squared actor output added to the actor loss.
    pub action_l2: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpdateStats {
    pub critic_loss: f64,
    pub actor_loss: f64,
}

pub fn actor_spec(state_dim: usize, action_dim: usize, hidden: [usize; 2], output: Activation) -> MlpSpec {
    MlpSpec::new(&[state_dim, hidden[0], hidden[1], action_dim], Activation::Relu, output)
}

pub fn critic_spec(state_dim: usize, action_dim: usize, hidden: [usize; 2]) -> MlpSpec {
    MlpSpec::new(&[state_dim + action_dim, hidden[0], hidden[1], 1], Activation::Relu, Activation::Identity)
}

impl Ddpg {
    pub fn new<R: Rng + ?Sized>(
        state_dim: usize,
        action_dim: usize,
        output: Activation,
        cfg: &AgentConfig,
        rng: &mut R,
    ) -> Result<Self, HdrlError> {
        let actor = Mlp::new(&actor_spec(state_dim, action_dim, cfg.hidden, output), Some(cfg.actor_init_scale), rng)?;
        let critic = Mlp::new(&critic_spec(state_dim, action_dim, cfg.hidden), None, rng)?;
        let mut agent = Self::from_nets(actor, critic, cfg);
        if output == Activation::Tanh {
            agent.action_l2 = cfg.action_l2;
        }
        Ok(agent)
    }

    /// Targets start as copies of the online networks.
    pub fn from_nets(actor: Mlp, critic: Mlp, cfg: &AgentConfig) -> Self {
        let actor_opt = Adam::for_mlp(AdamConfig::adam(cfg.lr_actor), &actor);
        let critic_opt = Adam::for_mlp(AdamConfig::adam(cfg.lr_critic), &critic);
        Self {
            target_actor: actor.clone(),
            target_critic: critic.clone(),
            actor,
            critic,
            actor_opt,
            critic_opt,
            gamma: cfg.gamma,
            tau: cfg.tau,
            batch: cfg.batch,
            action_l2: 0.0,
        }
    }

    pub fn state_dim(&self) -> usize {
        self.actor.input_dim()
    }

    pub fn action_dim(&self) -> usize {
        self.actor.output_dim()
    }

    pub fn to_tensors(&self, prefix: &str) -> Vec<Tensor> {
        let mut t = self.actor.to_tensors(&format!("{prefix}.actor"));
        t.extend(self.critic.to_tensors(&format!("{prefix}.critic")));
        t.extend(self.target_actor.to_tensors(&format!("{prefix}.target_actor")));
        t.extend(self.target_critic.to_tensors(&format!("{prefix}.target_critic")));
        t
    }

    pub fn from_tensors(
        prefix: &str,
        state_dim: usize,
        action_dim: usize,
        output: Activation,
        cfg: &AgentConfig,
        tensors: &[Tensor],
    ) -> Result<Self, HdrlError> {
        let a = actor_spec(state_dim, action_dim, cfg.hidden, output);
        let c = critic_spec(state_dim, action_dim, cfg.hidden);
        let mut agent = Self::from_nets(
            Mlp::from_tensors(&a, &format!("{prefix}.actor"), tensors)?,
            Mlp::from_tensors(&c, &format!("{prefix}.critic"), tensors)?,
            cfg,
        );
        agent.target_actor = Mlp::from_tensors(&a, &format!("{prefix}.target_actor"), tensors)?;
        agent.target_critic = Mlp::from_tensors(&c, &format!("{prefix}.target_critic"), tensors)?;
        if output == Activation::Tanh {
            agent.action_l2 = cfg.action_l2;
        }
        Ok(agent)
    }
}

/// Minibatch stacked into matrices.
#[derive(Debug, Clone)]
pub struct Batch {
    pub states: Array2<f64>,
    pub actions: Array2<f64>,
    pub rewards: Vec<f64>,
    pub next_states: Array2<f64>,
}

impl Batch {
    pub fn stack(items: &[&Transition]) -> Self {
        let rows = |f: &dyn Fn(&Transition) -> &Vec<f64>| {
            let w = f(items[0]).len();
            Array2::from_shape_vec((items.len(), w), items.iter().flat_map(|t| f(t).iter().copied()).collect())
                .expect("uniform transition widths")
        };
        Self {
            states: rows(&|t| &t.state),
            actions: rows(&|t| &t.action),
            rewards: items.iter().map(|t| t.reward).collect(),
            next_states: rows(&|t| &t.next_state),
        }
    }
}

fn join(a: &Array2<f64>, b: &Array2<f64>) -> Array2<f64> {
    concatenate(Axis(1), &[a.view(), b.view()]).expect("equal row counts")
}

/// TD targets y = r + γ·Q′(s′, μ′(s′)).
pub fn td_targets(target_actor: &Mlp, target_critic: &Mlp, batch: &Batch, gamma: f64) -> Result<Vec<f64>, HdrlError> {
    let next_a = target_actor.predict_batch(batch.next_states.view())?;
    let q_next = target_critic.predict_batch(join(&batch.next_states, &next_a).view())?;
    Ok(batch.rewards.iter().zip(q_next.column(0)).map(|(r, q)| r + gamma * q).collect())
}

/// Mean squared TD error and its gradient with respect to the critic.
pub fn critic_loss_and_grads(critic: &Mlp, batch: &Batch, targets: &[f64]) -> Result<(f64, MlpGrads), HdrlError> {
    let (q, tape) = critic.forward_batch(join(&batch.states, &batch.actions).view())?;
    let n = targets.len() as f64;
    let diff: Vec<f64> = q.column(0).iter().zip(targets).map(|(q, y)| q - y).collect();
    let loss = diff.iter().map(|d| d * d).sum::<f64>() / n;
    let upstream = Array2::from_shape_vec((diff.len(), 1), diff.iter().map(|d| 2.0 * d / n).collect())
        .expect("column vector");
    Ok((loss, critic.backward(&tape, upstream.view())?))
}

/// −mean Q(s, μ(s)) + λ·mean ‖μ(s)‖² and its gradient with respect to the actor.
pub fn actor_loss_and_grads(
    actor: &Mlp,
    critic: &Mlp,
    states: &Array2<f64>,
    action_l2: f64,
) -> Result<(f64, MlpGrads), HdrlError> {
    let (a, actor_tape) = actor.forward_batch(states.view())?;
    let (q, critic_tape) = critic.forward_batch(join(states, &a).view())?;
    let n = states.nrows() as f64;
    let loss = (-q.sum() + action_l2 * a.iter().map(|x| x * x).sum::<f64>()) / n;
    let upstream = Array2::from_elem((states.nrows(), 1), -1.0 / n);
    let cg = critic.backward(&critic_tape, upstream.view())?;
    let mut d_action = cg.input.slice(s![.., states.ncols()..]).to_owned();
    if action_l2 != 0.0 {
        d_action.zip_mut_with(&a, |d, &x| *d += 2.0 * action_l2 * x / n);
    }
    Ok((loss, actor.backward(&actor_tape, d_action.view())?))
}

/// One critic step, one actor step and Polyak updates of both targets.
/// Returns `None` (and changes nothing) while the buffer holds fewer than `batch` transitions.
pub fn ddpg_update<R: Rng + ?Sized>(
    agent: &mut Ddpg,
    buffer: &ReplayBuffer,
    rng: &mut R,
) -> Result<Option<UpdateStats>, HdrlError> {
    let Some(items) = buffer.sample(agent.batch, rng) else {
        return Ok(None);
    };
    let batch = Batch::stack(&items);
    let targets = td_targets(&agent.target_actor, &agent.target_critic, &batch, agent.gamma)?;
    let (critic_loss, cg) = critic_loss_and_grads(&agent.critic, &batch, &targets)?;
    agent.critic_opt.step_mlp(&mut agent.critic, &cg.slices())?;
    let (actor_loss, ag) = actor_loss_and_grads(&agent.actor, &agent.critic, &batch.states, agent.action_l2)?;
    agent.actor_opt.step_mlp(&mut agent.actor, &ag.slices())?;
    soft_update(&mut agent.target_critic, &agent.critic, agent.tau)?;
    soft_update(&mut agent.target_actor, &agent.actor, agent.tau)?;
    Ok(Some(UpdateStats { critic_loss, actor_loss }))
}
