//! Effective channel, received signal, SINR and spectral efficiency, plus the
//! mappers that turn unconstrained actor outputs into feasible precoders and
//! phase configurations.
//!
//! Effective channels are carried as the row vector h_eff,kᴴ, so the gain
//! seen by user `k` from beam `w_j` is the plain (unconjugated) dot product
//! of that row with `w_j`.

use std::f64::consts::PI;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::ChannelRealization;
use crate::C64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SignalError {
    #[error("{what}: expected {expected}, got {got}")]
    Dimension { what: &'static str, expected: usize, got: usize },
    #[error("noise power must be positive, got {0}")]
    NonPositiveNoise(f64),
    #[error("SINR must be non-negative, got {0}")]
    NegativeSinr(f64),
    #[error("all-zero precoder has no direction to scale")]
    ZeroPrecoder,
    #[error("precoder contains non-finite entries")]
    NonFinite,
    #[error("user index {k} out of range for {n_users} users")]
    UserIndex { k: usize, n_users: usize },
    #[error("invalid link budget: {0}")]
    InvalidBudget(String),
}

fn check_dim(what: &'static str, expected: usize, got: usize) -> Result<(), SignalError> {
    if expected == got {
        Ok(())
    } else {
        Err(SignalError::Dimension { what, expected, got })
    }
}

/// BS precoding matrix W (N×K), column k is w_k.
#[derive(Debug, Clone, PartialEq)]
pub struct Precoder(Array2<C64>);

impl Precoder {
    /// Wraps a matrix without touching its power. Use [`project_power`] to
    /// obtain a feasible precoder from arbitrary input.
    pub fn from_matrix(w: Array2<C64>) -> Self {
        Self(w)
    }

    pub fn matrix(&self) -> &Array2<C64> {
        &self.0
    }

    pub fn into_matrix(self) -> Array2<C64> {
        self.0
    }

    pub fn n_antennas(&self) -> usize {
        self.0.nrows()
    }

    pub fn n_users(&self) -> usize {
        self.0.ncols()
    }

    /// Σ_k ‖w_k‖².
    pub fn total_power(&self) -> f64 {
        self.0.iter().map(|z| z.norm_sqr()).sum()
    }
}

/// RIS phase shifts θ_m in [0, 2π). Θ = diag(e^{jθ_m}) is implied, so the
/// unit-modulus constraint holds by representation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseConfig {
    angles: Vec<f64>,
}

impl PhaseConfig {
    /// Wraps arbitrary real angles into [0, 2π).
    pub fn new(angles: impl IntoIterator<Item = f64>) -> Self {
        let angles = angles.into_iter().map(wrap_phase).collect();
        Self { angles }
    }

    pub fn zeros(m: usize) -> Self {
        Self { angles: vec![0.0; m] }
    }

    pub fn angles(&self) -> &[f64] {
        &self.angles
    }

    pub fn len(&self) -> usize {
        self.angles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.angles.is_empty()
    }

    /// Diagonal entries e^{jθ_m}.
    pub fn reflection(&self) -> Vec<C64> {
        self.angles.iter().map(|&t| C64::from_polar(1.0, t)).collect()
    }
}

fn wrap_phase(t: f64) -> f64 {
    let w = t.rem_euclid(2.0 * PI);
    // rem_euclid can round up to exactly 2π for tiny negative inputs
    if w >= 2.0 * PI {
        0.0
    } else {
        w
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkBudget {
    /// Total transmit power, watts.
    pub p_max: f64,
    /// Per-user noise power, watts.
    pub sigma2: f64,
    /// Fairness threshold, bits/s/Hz.
    pub r_min: f64,
}

impl LinkBudget {
    pub fn validate(&self) -> Result<(), SignalError> {
        if !(self.p_max > 0.0) {
            return Err(SignalError::InvalidBudget(format!("p_max must be positive, got {}", self.p_max)));
        }
        if !(self.sigma2 > 0.0) {
            return Err(SignalError::NonPositiveNoise(self.sigma2));
        }
        if !(self.r_min >= 0.0) {
            return Err(SignalError::InvalidBudget(format!("r_min must be non-negative, got {}", self.r_min)));
        }
        Ok(())
    }
}

/// Converts dBm to watts.
pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

/// Per-user link modes selected by the meta-controller (true = use the
/// direct link where it physically exists).
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LinkModes(pub Vec<bool>);

impl LinkModes {
    pub fn all_direct(k: usize) -> Self {
        Self(vec![true; k])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_f64(&self) -> Vec<f64> {
        self.0.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub per_user_rate: Vec<f64>,
    pub sum_rate: f64,
    pub min_rate: f64,
    pub fairness_violated: bool,
}

impl RateReport {
    pub fn from_rates(per_user_rate: Vec<f64>, r_min: f64) -> Self {
        let sum_rate = per_user_rate.iter().sum();
        let min_rate = per_user_rate.iter().copied().fold(f64::INFINITY, f64::min);
        Self { fairness_violated: min_rate < r_min, per_user_rate, sum_rate, min_rate }
    }

    /// CSV rows `(slot, user, rate, sum_rate, violated)`.
    pub fn csv_rows(&self, slot: usize) -> Vec<String> {
        self.per_user_rate
            .iter()
            .enumerate()
            .map(|(k, r)| {
                format!("{slot},{k},{r},{},{}", self.sum_rate, u8::from(self.fairness_violated))
            })
            .collect()
    }

    pub const CSV_HEADER: &'static str = "slot,user,rate,sum_rate,violated";
}

/// h_eff,kᴴ = b_k·h_d,kᴴ + h_r,kᴴ·Θ·G as a length-N row.
pub fn effective_channel(
    h_d_k: ArrayView1<C64>,
    h_r_k: ArrayView1<C64>,
    g: ArrayView2<C64>,
    theta: &PhaseConfig,
    b_k: bool,
) -> Result<Array1<C64>, SignalError> {
    let (m, n) = g.dim();
    check_dim("direct channel length", n, h_d_k.len())?;
    check_dim("RIS channel length", m, h_r_k.len())?;
    check_dim("phase count", m, theta.len())?;
    let mut row = if b_k { h_d_k.mapv(|z| z.conj()) } else { Array1::zeros(n) };
    for (mi, (&t, h)) in theta.angles().iter().zip(h_r_k.iter()).enumerate() {
        let coeff = h.conj() * C64::from_polar(1.0, t);
        row.scaled_add(coeff, &g.row(mi));
    }
    Ok(row)
}

/// Stacks every user's effective channel (K×N), with
/// b_k = (not physically blocked) AND mode_k.
pub fn effective_channels(
    realization: &ChannelRealization,
    modes: &LinkModes,
    theta: &PhaseConfig,
) -> Result<Array2<C64>, SignalError> {
    let k = realization.n_users();
    check_dim("link mode count", k, modes.len())?;
    let mut out = Array2::zeros((k, realization.n_bs()));
    for u in 0..k {
        let b = !realization.blocked[u] && modes.0[u];
        let row = effective_channel(
            realization.h_d.row(u),
            realization.h_r.row(u),
            realization.g.view(),
            theta,
            b,
        )?;
        out.row_mut(u).assign(&row);
    }
    Ok(out)
}

fn gain(h_row: ArrayView1<C64>, w_col: ArrayView1<C64>) -> C64 {
    h_row.iter().zip(w_col.iter()).map(|(h, w)| h * w).sum()
}

/// Received signal of one user split into its three terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReceivedSignal {
    pub desired: C64,
    pub interference: C64,
    pub noise: C64,
}

impl ReceivedSignal {
    pub fn total(&self) -> C64 {
        self.desired + self.interference + self.noise
    }
}

/// y_k = h_eff,kᴴ w_k s_k + Σ_{j≠k} h_eff,kᴴ w_j s_j + n_k.
pub fn received_signal(
    h_eff_k: ArrayView1<C64>,
    w: &Precoder,
    symbols: &[C64],
    noise_sample: C64,
    k: usize,
) -> Result<ReceivedSignal, SignalError> {
    let wm = w.matrix();
    check_dim("effective channel length", wm.nrows(), h_eff_k.len())?;
    check_dim("symbol count", wm.ncols(), symbols.len())?;
    if k >= wm.ncols() {
        return Err(SignalError::UserIndex { k, n_users: wm.ncols() });
    }
    let mut interference = C64::new(0.0, 0.0);
    let mut desired = C64::new(0.0, 0.0);
    for (j, &s) in symbols.iter().enumerate() {
        let term = gain(h_eff_k, wm.column(j)) * s;
        if j == k {
            desired = term;
        } else {
            interference += term;
        }
    }
    Ok(ReceivedSignal { desired, interference, noise: noise_sample })
}

/// SINR of user `k` given all effective channels (K×N) and the precoder.
pub fn sinr(h_eff: ArrayView2<C64>, w: &Precoder, sigma2: f64, k: usize) -> Result<f64, SignalError> {
    if !(sigma2 > 0.0) {
        return Err(SignalError::NonPositiveNoise(sigma2));
    }
    let wm = w.matrix();
    check_dim("effective channel width", wm.nrows(), h_eff.ncols())?;
    if k >= h_eff.nrows() {
        return Err(SignalError::UserIndex { k, n_users: h_eff.nrows() });
    }
    let row = h_eff.row(k);
    let mut signal = 0.0;
    let mut interference = 0.0;
    for j in 0..wm.ncols() {
        let p = gain(row, wm.column(j)).norm_sqr();
        if j == k {
            signal = p;
        } else {
            interference += p;
        }
    }
    Ok(signal / (interference + sigma2))
}

/// log₂(1 + γ).
pub fn spectral_efficiency(gamma: f64) -> Result<f64, SignalError> {
    if !(gamma >= 0.0) {
        return Err(SignalError::NegativeSinr(gamma));
    }
    Ok(gamma.ln_1p() / std::f64::consts::LN_2)
}

/// Sum/min SE and fairness status for one slot.
pub fn evaluate(
    realization: &ChannelRealization,
    modes: &LinkModes,
    w: &Precoder,
    theta: &PhaseConfig,
    budget: &LinkBudget,
) -> Result<RateReport, SignalError> {
    let k = realization.n_users();
    check_dim("precoder columns", k, w.n_users())?;
    let h_eff = effective_channels(realization, modes, theta)?;
    let rates = (0..k)
        .map(|u| spectral_efficiency(sinr(h_eff.view(), w, budget.sigma2, u)?))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(RateReport::from_rates(rates, budget.r_min))
}

/// Scales W onto the power ball Σ‖w_k‖² ≤ p_max; feasible input is returned as is.
pub fn project_power(w_raw: Array2<C64>, p_max: f64) -> Result<Precoder, SignalError> {
    if w_raw.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(SignalError::NonFinite);
    }
    let power: f64 = w_raw.iter().map(|z| z.norm_sqr()).sum();
    if power == 0.0 {
        return Err(SignalError::ZeroPrecoder);
    }
    if power <= p_max {
        return Ok(Precoder(w_raw));
    }
    let scale = (p_max / power).sqrt();
    Ok(Precoder(w_raw.mapv(|z| z * scale)))
}

/// Builds W from interleaved `[Re w_{0,0}, Im w_{0,0}, Re w_{1,0}, …]` with
/// user-major ordering (all N antennas of user 0 first), then projects it.
pub fn precoder_from_raw(raw: &[f64], n: usize, k: usize, p_max: f64) -> Result<Precoder, SignalError> {
    check_dim("raw precoder length", 2 * n * k, raw.len())?;
    let w = Array2::from_shape_fn((n, k), |(a, u)| {
        let i = 2 * (u * n + a);
        C64::new(raw[i], raw[i + 1])
    });
    project_power(w, p_max)
}

/// θ_m = π·(clip(raw_m, −1, 1) + 1), with θ = 2π folded back to 0.
pub fn angles_from_raw(raw: &[f64]) -> PhaseConfig {
    PhaseConfig::new(raw.iter().map(|&r| {
        let r = if r.is_nan() { 0.0 } else { r.clamp(-1.0, 1.0) };
        PI * (r + 1.0)
    }))
}
