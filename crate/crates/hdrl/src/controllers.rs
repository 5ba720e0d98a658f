//! Observation and action types of both controllers, and the reward signals.

use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::HdrlError;
use ris_core::{angles_from_raw, precoder_from_raw, AreaBounds, LinkModes, PhaseConfig, Precoder, RateReport, UserState};
use ris_learn::Mlp;

/// Per-user link mode chosen by the meta-controller (true = direct link enabled).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Goal {
    pub b: Vec<bool>,
}

impl Goal {
    pub fn all_direct(k: usize) -> Self {
        Self { b: vec![true; k] }
    }

    pub fn as_f64(&self) -> Vec<f64> {
        self.b.iter().map(|&x| f64::from(u8::from(x))).collect()
    }

    pub fn modes(&self) -> LinkModes {
        LinkModes(self.b.clone())
    }
}

/// Normalized user positions and physical blockage flags.
#[derive(Debug, Clone, PartialEq)]
pub struct HighState {
    pub positions: Vec<[f64; 2]>,
    pub blocked: Vec<bool>,
}

impl HighState {
    pub fn observe(users: &[UserState], bounds: &AreaBounds) -> Self {
        Self {
            positions: users.iter().map(|u| bounds.normalize(u.position)).collect(),
            blocked: users.iter().map(|u| u.physically_blocked).collect(),
        }
    }

    /// [x₀, y₀, …, x_{K−1}, y_{K−1}, β₀, …, β_{K−1}].
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.positions.iter().flat_map(|p| [p[0], p[1]]).collect();
        v.extend(self.blocked.iter().map(|&b| f64::from(u8::from(b))));
        v
    }

    pub fn dim(k: usize) -> usize {
        3 * k
    }
}

/// Sub-controller observation: K·d_e embedding entries followed by the goal bits.
pub fn low_state(embeddings: &[f64], goal: &Goal) -> Vec<f64> {
    let mut v = embeddings.to_vec();
    v.extend(goal.as_f64());
    v
}

fn check_width(net: &Mlp, state: &[f64]) -> Result<(), HdrlError> {
    if net.input_dim() != state.len() {
        return Err(HdrlError::Dimension { what: "actor input", expected: net.input_dim(), got: state.len() });
    }
    Ok(())
}

fn perturb<R: Rng + ?Sized>(values: &mut [f64], noise_std: f64, lo: f64, hi: f64, rng: &mut R) {
    if noise_std > 0.0 {
        let n = Normal::new(0.0, noise_std).expect("finite σ");
        for v in values.iter_mut() {
            *v += n.sample(rng);
        }
    }
    for v in values.iter_mut() {
        *v = if v.is_nan() { 0.5 * (lo + hi) } else { v.clamp(lo, hi) };
    }
}

/// Thresholds continuous meta outputs at 0.5.
pub fn goal_from_continuous(values: &[f64]) -> Goal {
    Goal { b: values.iter().map(|&v| v >= 0.5).collect() }
}

/// Sigmoid actor output plus Gaussian noise, clipped to [0, 1]; returns the
/// executed goal and the continuous values stored for the critic.
pub fn meta_select_goal<R: Rng + ?Sized>(
    state: &HighState,
    actor: &Mlp,
    noise_std: f64,
    rng: &mut R,
) -> Result<(Goal, Vec<f64>), HdrlError> {
    let s = state.to_vec();
    check_width(actor, &s)?;
    let mut out = actor.predict(&s)?;
    perturb(&mut out, noise_std, 0.0, 1.0, rng);
    Ok((goal_from_continuous(&out), out))
}

/// Splits a tanh action of length 2NK + M into a feasible precoder and phase vector.
pub fn decode_low_action(raw: &[f64], n: usize, k: usize, m: usize, p_max: f64) -> Result<(Precoder, PhaseConfig), HdrlError> {
    if raw.len() != 2 * n * k + m {
        return Err(HdrlError::Dimension { what: "low-level action", expected: 2 * n * k + m, got: raw.len() });
    }
    let w_raw = &raw[..2 * n * k];
    // an all-zero output is feasible but has no direction to project
    let w = if w_raw.iter().all(|&x| x == 0.0) {
        Precoder::from_matrix(Array2::zeros((n, k)))
    } else {
        precoder_from_raw(w_raw, n, k, p_max)?
    };
    Ok((w, angles_from_raw(&raw[2 * n * k..])))
}

/// Tanh actor output plus Gaussian noise, re-clipped to [−1, 1], mapped to
/// a feasible (precoder, phases) pair. Also returns the clipped raw action.
#[allow(clippy::too_many_arguments)]
pub fn sub_select_action<R: Rng + ?Sized>(
    state: &[f64],
    actor: &Mlp,
    noise_std: f64,
    n: usize,
    k: usize,
    m: usize,
    p_max: f64,
    rng: &mut R,
) -> Result<(Precoder, PhaseConfig, Vec<f64>), HdrlError> {
    check_width(actor, state)?;
    let mut raw = actor.predict(state)?;
    perturb(&mut raw, noise_std, -1.0, 1.0, rng);
    let (w, theta) = decode_low_action(&raw, n, k, m, p_max)?;
    Ok((w, theta, raw))
}

/// Flat-agent action: K mode values (positive = direct link), then the low-level action.
pub fn decode_flat_action(
    raw: &[f64],
    n: usize,
    k: usize,
    m: usize,
    p_max: f64,
) -> Result<(Goal, Precoder, PhaseConfig), HdrlError> {
    if raw.len() != k + 2 * n * k + m {
        return Err(HdrlError::Dimension { what: "flat action", expected: k + 2 * n * k + m, got: raw.len() });
    }
    let goal = Goal { b: raw[..k].iter().map(|&v| v > 0.0).collect() };
    let (w, theta) = decode_low_action(&raw[k..], n, k, m, p_max)?;
    Ok((goal, w, theta))
}

/// Tanh flat-actor output with exploration, clipped to [−1, 1].
pub fn flat_select_action<R: Rng + ?Sized>(
    state: &[f64],
    actor: &Mlp,
    noise_std: f64,
    rng: &mut R,
) -> Result<Vec<f64>, HdrlError> {
    check_width(actor, state)?;
    let mut raw = actor.predict(state)?;
    perturb(&mut raw, noise_std, -1.0, 1.0, rng);
    Ok(raw)
}

/// r^l = Σ_k R_k − P·1(min_k R_k < R_min).
pub fn low_reward(report: &RateReport, r_min: f64, penalty_p: f64) -> f64 {
    if report.min_rate < r_min {
        report.sum_rate - penalty_p
    } else {
        report.sum_rate
    }
}

/// R^h: undiscounted sum of the macro-slot's low-level rewards.
pub fn high_reward(low_rewards: &[f64]) -> Result<f64, HdrlError> {
    if low_rewards.is_empty() {
        return Err(HdrlError::Config("a macro-slot holds at least one slot".into()));
    }
    Ok(low_rewards.iter().sum())
}
