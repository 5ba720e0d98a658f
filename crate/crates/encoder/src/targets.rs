//! Regression targets for fine-tuning the projection head.

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::features::user_channel_matrix;
use crate::patch::PatchSequence;
use crate::EncoderError;
use ris_core::{effective_channel, BeamCodebook, ChannelRealization, LinkBudget, PhaseCodebook};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FinetuneTarget {
    /// Whitened principal-component coordinates of the normalized input.
    #[default]
    SelfSupervised,
    /// Single-user spectral efficiencies over the sweep codebooks.
    Supervised,
}

/// Top-d_e principal directions of flattened patch sequences.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaSketch {
    mean: Vec<f64>,
    /// d_e×D, rows pre-divided by the component's standard deviation.
    components: Array2<f64>,
}

impl PcaSketch {
    pub fn fit(samples: &[PatchSequence], d_e: usize) -> Result<Self, EncoderError> {
        let first = samples.first().ok_or_else(|| EncoderError::Config("PCA needs samples".into()))?;
        let dim = first.patches.len();
        let n = samples.len() as f64;
        let mut mean = vec![0.0; dim];
        for s in samples {
            for (m, x) in mean.iter_mut().zip(s.patches.iter()) {
                *m += x / n;
            }
        }
        let mut cov = DMatrix::<f64>::zeros(dim, dim);
        for s in samples {
            let c: Vec<f64> = s.patches.iter().zip(&mean).map(|(x, m)| x - m).collect();
            let v = DMatrix::from_column_slice(dim, 1, &c);
            cov += &v * v.transpose();
        }
        cov /= n;
        let eig = SymmetricEigen::new(cov);
        let mut order: Vec<usize> = (0..dim).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
        let mut components = Array2::zeros((d_e, dim));
        for (row, &idx) in order.iter().take(d_e).enumerate() {
            let lambda = eig.eigenvalues[idx];
            if lambda <= 1e-12 {
                continue;
            }
            let col = eig.eigenvectors.column(idx);
            // fix the sign so the largest-magnitude entry is positive
            let pivot = col.iter().copied().fold(0.0f64, |a, b| if b.abs() > a.abs() { b } else { a });
            let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
            for j in 0..dim {
                components[[row, j]] = sign * col[j] / lambda.sqrt();
            }
        }
        Ok(Self { mean, components })
    }

    pub fn transform(&self, seq: &PatchSequence) -> Vec<f64> {
        let c: Vec<f64> = seq.patches.iter().zip(&self.mean).map(|(x, m)| x - m).collect();
        self.components.rows().into_iter().map(|r| r.iter().zip(&c).map(|(a, b)| a * b).sum()).collect()
    }
}

/// Best single-user SE per BS beam (over RIS profiles), then per RIS profile
/// (over BS beams), truncated or zero-padded to `d_e`.
pub fn sweep_targets(
    r: &ChannelRealization,
    k: usize,
    bs: &BeamCodebook,
    ris: &PhaseCodebook,
    budget: &LinkBudget,
    d_e: usize,
) -> Result<Vec<f64>, EncoderError> {
    user_channel_matrix(r, k)?;
    let b_k = !r.blocked[k];
    let mut grid = vec![vec![0.0; bs.size()]; ris.size()];
    for (ri, theta) in ris.entries().iter().enumerate() {
        let h = effective_channel(r.h_d.row(k), r.h_r.row(k), r.g.view(), theta, b_k)?;
        for (qi, c) in bs.entries().iter().enumerate() {
            let gain = h.dot(c).norm_sqr() * budget.p_max / budget.sigma2;
            grid[ri][qi] = gain.ln_1p() / std::f64::consts::LN_2;
        }
    }
    let mut out: Vec<f64> = (0..bs.size()).map(|q| grid.iter().map(|row| row[q]).fold(f64::MIN, f64::max)).collect();
    out.extend(grid.iter().map(|row| row.iter().copied().fold(f64::MIN, f64::max)));
    out.resize(d_e, 0.0);
    Ok(out)
}
