//! Channel, signal and codebook models for RIS-assisted multi-user downlink.
//!
//! The crate covers the physical side of the simulator: a geometric multipath
//! generator with mobility and blockage dynamics, the effective-channel /
//! SINR / spectral-efficiency chain with its feasibility mappers, and the
//! DFT-codebook beam-sweeping baseline. Everything here is a pure function of
//! its inputs and an explicit seed.

pub mod channel;
pub mod codebook;
pub mod dataset;
pub mod par;
pub mod seed;
pub mod signal;

pub use channel::{
    array_response, generate_channels, spawn_users, step_blockage, step_mobility, AreaBounds,
    BlockageModel, ChannelError, ChannelProcess, ChannelRealization, GeometryConfig, MobilityModel,
    UserState,
};
pub use codebook::{
    beam_sweep, beam_sweep_with, dft_bs_codebook, ris_phase_codebook, BeamCodebook,
    PhaseCodebook, SweepOutcome, SweepRow,
};
pub use par::Exec;
pub use signal::{
    angles_from_raw, dbm_to_watts, effective_channel, effective_channels, evaluate, precoder_from_raw,
    project_power, received_signal, sinr, spectral_efficiency, LinkBudget, LinkModes, PhaseConfig,
    Precoder, RateReport, ReceivedSignal, SignalError,
};

/// Complex baseband sample type used throughout.
pub type C64 = num_complex::Complex<f64>;
