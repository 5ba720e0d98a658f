//! DFT codebooks and the exhaustive beam-sweeping baseline.
//!
//! BS beams are normalized steering vectors on a uniform grid in sin-space;
//! RIS profiles are linear phase ramps. The sweep visits every RIS profile,
//! greedily assigns BS beams to users in index order with an equal power
//! split, and keeps the profile with the highest sum SE.

use std::f64::consts::PI;

use ndarray::{Array1, Array2};

use crate::channel::{array_response, ChannelRealization};
use crate::par::{self, Exec};
use crate::signal::{
    effective_channels, evaluate, spectral_efficiency, LinkBudget, LinkModes, PhaseConfig,
    Precoder, RateReport, SignalError,
};
use crate::C64;

/// Unit-norm BS beams.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamCodebook {
    entries: Vec<Array1<C64>>,
}

impl BeamCodebook {
    pub fn entries(&self) -> &[Array1<C64>] {
        &self.entries
    }
    pub fn size(&self) -> usize {
        self.entries.len()
    }
    /// The first `size` entries.
    pub fn prefix(&self, size: usize) -> Self {
        Self { entries: self.entries[..size.min(self.entries.len())].to_vec() }
    }
}

/// RIS phase profiles.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseCodebook {
    entries: Vec<PhaseConfig>,
}

impl PhaseCodebook {
    pub fn entries(&self) -> &[PhaseConfig] {
        &self.entries
    }
    pub fn size(&self) -> usize {
        self.entries.len()
    }
}

/// Grid angle of beam `q`: asin(2q/size − 1).
pub fn dft_grid_angle(q: usize, size: usize) -> f64 {
    (2.0 * q as f64 / size as f64 - 1.0).asin()
}

/// `size` half-wavelength beams for an `n`-element array, entry q steering
/// at [`dft_grid_angle`].
pub fn dft_bs_codebook(n: usize, size: usize) -> BeamCodebook {
    let norm = (n as f64).sqrt();
    let entries = (0..size)
        .map(|q| array_response(dft_grid_angle(q, size), n, 0.5).mapv(|z| z / norm))
        .collect();
    BeamCodebook { entries }
}

/// `size` linear phase ramps θ_i = 2π·q·i/size mod 2π.
pub fn ris_phase_codebook(m: usize, size: usize) -> PhaseCodebook {
    let entries = (0..size)
        .map(|q| {
            PhaseConfig::new((0..m).map(|i| {
                // exact integer reduction keeps q·i/size ramps exact
                let r = (q * i) % size;
                2.0 * PI * r as f64 / size as f64
            }))
        })
        .collect();
    PhaseCodebook { entries }
}

/// One RIS profile's greedy result.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub ris_index: usize,
    pub bs_indices: Vec<usize>,
    pub sum_se: f64,
}

impl SweepRow {
    pub fn csv_header(k: usize) -> String {
        let mut h = String::from("ris_index");
        for u in 0..k {
            h.push_str(&format!(",bs_index_{u}"));
        }
        h.push_str(",sum_se");
        h
    }

    pub fn csv_line(&self) -> String {
        let mut s = self.ris_index.to_string();
        for b in &self.bs_indices {
            s.push_str(&format!(",{b}"));
        }
        s.push_str(&format!(",{}", self.sum_se));
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOutcome {
    pub precoder: Precoder,
    pub phases: PhaseConfig,
    pub report: RateReport,
    pub ris_index: usize,
    pub bs_indices: Vec<usize>,
    /// Per-profile results in codebook order.
    pub trace: Vec<SweepRow>,
}

fn equal_power_precoder(bs_cb: &BeamCodebook, picks: &[usize], p_max: f64) -> Precoder {
    let n = bs_cb.entries[0].len();
    let k = picks.len();
    let amp = (p_max / k as f64).sqrt();
    let mut w = Array2::<C64>::zeros((n, k));
    for (u, &q) in picks.iter().enumerate() {
        w.column_mut(u).assign(&bs_cb.entries[q].mapv(|z| z * amp));
    }
    Precoder::from_matrix(w)
}

fn sweep_profile(
    realization: &ChannelRealization,
    bs_cb: &BeamCodebook,
    theta: &PhaseConfig,
    ris_index: usize,
    budget: &LinkBudget,
) -> Result<(SweepRow, Precoder, RateReport), SignalError> {
    let k = realization.n_users();
    let modes = LinkModes::all_direct(k);
    let h_eff = effective_channels(realization, &modes, theta)?;
    let per_user_power = budget.p_max / k as f64;
    // beam gains |h_eff,u · beam_q|² for all (u, q)
    let gains: Vec<Vec<f64>> = (0..k)
        .map(|u| {
            bs_cb
                .entries
                .iter()
                .map(|beam| {
                    let g: C64 = h_eff.row(u).iter().zip(beam.iter()).map(|(h, b)| h * b).sum();
                    g.norm_sqr() * per_user_power
                })
                .collect()
        })
        .collect();
    let mut picks: Vec<usize> = Vec::with_capacity(k);
    for u in 0..k {
        let mut best = (0usize, f64::NEG_INFINITY);
        for q in 0..bs_cb.size() {
            let interference: f64 = picks.iter().map(|&p| gains[u][p]).sum();
            let se = spectral_efficiency(gains[u][q] / (interference + budget.sigma2))?;
            if se > best.1 {
                best = (q, se);
            }
        }
        picks.push(best.0);
    }
    let precoder = equal_power_precoder(bs_cb, &picks, budget.p_max);
    let report = evaluate(realization, &modes, &precoder, theta, budget)?;
    let row = SweepRow { ris_index, bs_indices: picks, sum_se: report.sum_rate };
    Ok((row, precoder, report))
}

/// Sweeps every (RIS profile, greedy BS assignment) and returns the best.
pub fn beam_sweep(
    realization: &ChannelRealization,
    bs_cb: &BeamCodebook,
    ris_cb: &PhaseCodebook,
    budget: &LinkBudget,
) -> Result<SweepOutcome, SignalError> {
    beam_sweep_with(Exec::default(), realization, bs_cb, ris_cb, budget)
}

/// [`beam_sweep`] with an explicit execution mode. Profiles are evaluated
/// independently; the reduction is max by value, then lowest index.
pub fn beam_sweep_with(
    exec: Exec,
    realization: &ChannelRealization,
    bs_cb: &BeamCodebook,
    ris_cb: &PhaseCodebook,
    budget: &LinkBudget,
) -> Result<SweepOutcome, SignalError> {
    budget.validate()?;
    if bs_cb.size() == 0 || ris_cb.size() == 0 {
        return Err(SignalError::Dimension { what: "codebook size", expected: 1, got: 0 });
    }
    if bs_cb.entries[0].len() != realization.n_bs() {
        return Err(SignalError::Dimension {
            what: "BS beam length",
            expected: realization.n_bs(),
            got: bs_cb.entries[0].len(),
        });
    }
    let results = par::try_map_indexed(exec, ris_cb.size(), |r| {
        sweep_profile(realization, bs_cb, &ris_cb.entries[r], r, budget)
    })?;
    let mut best = 0;
    for (i, res) in results.iter().enumerate() {
        if res.0.sum_se > results[best].0.sum_se {
            best = i;
        }
    }
    let trace: Vec<SweepRow> = results.iter().map(|r| r.0.clone()).collect();
    let (row, precoder, report) = results.into_iter().nth(best).expect("non-empty codebook");
    Ok(SweepOutcome {
        precoder,
        phases: ris_cb.entries[best].clone(),
        report,
        ris_index: row.ris_index,
        bs_indices: row.bs_indices,
        trace,
    })
}
