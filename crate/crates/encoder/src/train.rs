//! Masked channel modeling and projection-head fine-tuning.

use std::io::{self, Write};

use ndarray::{s, Array1, Array2, Axis};
use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::model::{backward, cls_rows, forward, patch_rows, EncoderParams};
use crate::patch::PatchSequence;
use crate::EncoderError;
use ris_learn::{Adam, AdamConfig};

/// ⌈fraction·P⌉ distinct masked positions, at least one.
pub fn draw_mask<R: Rng + ?Sized>(n_patches: usize, fraction: f64, rng: &mut R) -> Vec<bool> {
    let count = ((fraction * n_patches as f64).ceil() as usize).clamp(1, n_patches);
    let mut mask = vec![false; n_patches];
    for i in index::sample(rng, n_patches, count) {
        mask[i] = true;
    }
    mask
}

fn check_fraction(fraction: f64) -> Result<(), EncoderError> {
    if fraction > 0.0 && fraction < 1.0 {
        Ok(())
    } else {
        Err(EncoderError::Config(format!("mask fraction must lie in (0, 1), got {fraction}")))
    }
}

/// Reconstruction MSE over masked positions, with gradients for every
/// parameter except the output projection. Masks are taken from `batch`.
pub fn masked_loss_and_grads(
    params: &EncoderParams,
    batch: &[PatchSequence],
) -> Result<(f64, EncoderParams), EncoderError> {
    let c = params.config;
    let mut grads = EncoderParams::zeros(c);
    let (z, cache) = forward(params, batch)?;
    let pr = patch_rows(&z, &c);
    let recon = pr.dot(&params.recon_weight) + &params.recon_bias;
    let masked_rows: usize = batch.iter().map(|s| s.mask.iter().filter(|&&m| m).count()).sum();
    if masked_rows == 0 {
        return Ok((0.0, grads));
    }
    let count = (masked_rows * c.patch_len) as f64;
    let mut drecon = Array2::zeros(recon.raw_dim());
    let mut loss = 0.0;
    for (b, seq) in batch.iter().enumerate() {
        for j in 0..c.n_patches {
            if !seq.mask[j] {
                continue;
            }
            let row = b * c.n_patches + j;
            let diff = &recon.row(row) - &seq.patches.row(j);
            loss += diff.dot(&diff);
            drecon.row_mut(row).assign(&(diff * (2.0 / count)));
        }
    }
    grads.recon_weight = pr.t().dot(&drecon).as_standard_layout().into_owned();
    grads.recon_bias = drecon.sum_axis(Axis(0));
    let dpr = drecon.dot(&params.recon_weight.t());
    let t = c.seq_len();
    let mut dz = Array2::zeros(z.raw_dim());
    for b in 0..batch.len() {
        dz.slice_mut(s![b * t + 1..(b + 1) * t, ..]).assign(&dpr.slice(s![b * c.n_patches..(b + 1) * c.n_patches, ..]));
    }
    backward(params, &cache, &dz, &mut grads);
    Ok((loss / count, grads))
}

pub fn pretrain_optimizer(params: &EncoderParams, config: AdamConfig) -> Adam {
    Adam::new(config, &params.tensor_sizes())
}

pub fn finetune_optimizer(params: &EncoderParams, config: AdamConfig) -> Adam {
    Adam::new(config, &[params.output_projection.len()])
}

/// Draws fresh masks, evaluates the masked loss and applies one optimizer update.
pub fn masked_pretrain_step<R: Rng + ?Sized>(
    batch: &[PatchSequence],
    params: &mut EncoderParams,
    mask_fraction: f64,
    optimizer: &mut Adam,
    rng: &mut R,
) -> Result<f64, EncoderError> {
    check_fraction(mask_fraction)?;
    let p = params.config.n_patches;
    let masked: Vec<PatchSequence> =
        batch.iter().map(|s| s.clone().with_mask(draw_mask(p, mask_fraction, rng))).collect();
    let (loss, grads) = masked_loss_and_grads(params, &masked)?;
    let g = grads.tensors();
    let slices: Vec<&[f64]> = g.iter().map(|t| t.data).collect();
    optimizer.step(params.tensors_mut(), &slices)?;
    Ok(loss)
}

/// Masked loss over a whole dataset with masks from a fixed seed, no update.
pub fn masked_eval_loss<R: Rng + ?Sized>(
    params: &EncoderParams,
    data: &[PatchSequence],
    mask_fraction: f64,
    rng: &mut R,
) -> Result<f64, EncoderError> {
    check_fraction(mask_fraction)?;
    let p = params.config.n_patches;
    let mut total = 0.0;
    let mut n = 0usize;
    for chunk in data.chunks(64) {
        let masked: Vec<PatchSequence> =
            chunk.iter().map(|s| s.clone().with_mask(draw_mask(p, mask_fraction, rng))).collect();
        let rows: usize = masked.iter().map(|s| s.mask.iter().filter(|&&m| m).count()).sum();
        total += masked_loss_and_grads_value(params, &masked)? * rows as f64;
        n += rows;
    }
    Ok(if n == 0 { 0.0 } else { total / n as f64 })
}

fn masked_loss_and_grads_value(params: &EncoderParams, batch: &[PatchSequence]) -> Result<f64, EncoderError> {
    let c = params.config;
    let (z, _) = forward(params, batch)?;
    let recon = patch_rows(&z, &c).dot(&params.recon_weight) + &params.recon_bias;
    let mut loss = 0.0;
    let mut count = 0usize;
    for (b, seq) in batch.iter().enumerate() {
        for j in (0..c.n_patches).filter(|&j| seq.mask[j]) {
            let diff = &recon.row(b * c.n_patches + j) - &seq.patches.row(j);
            loss += diff.dot(&diff);
            count += c.patch_len;
        }
    }
    Ok(if count == 0 { 0.0 } else { loss / count as f64 })
}

fn unmasked(seq: &PatchSequence) -> PatchSequence {
    PatchSequence::new(seq.patches.clone())
}

/// Projection-head MSE and its gradient w.r.t. the output projection only.
pub fn finetune_loss_and_grad(
    params: &EncoderParams,
    batch: &[(PatchSequence, Vec<f64>)],
) -> Result<(f64, Array2<f64>), EncoderError> {
    let c = params.config;
    let seqs: Vec<PatchSequence> = batch.iter().map(|(s, _)| unmasked(s)).collect();
    let (z, _) = forward(params, &seqs)?;
    let cls = cls_rows(&z, &c);
    let out = cls.dot(&params.output_projection);
    let mut diff = out;
    for (mut row, (_, target)) in diff.rows_mut().into_iter().zip(batch) {
        if target.len() != c.d_e {
            return Err(EncoderError::Dimension { what: "fine-tune target", expected: c.d_e, got: target.len() });
        }
        row -= &Array1::from(target.clone());
    }
    let count = diff.len().max(1) as f64;
    let loss = diff.iter().map(|d| d * d).sum::<f64>() / count;
    let grad = cls.t().dot(&(diff * (2.0 / count))).as_standard_layout().into_owned();
    Ok((loss, grad))
}

/// One update of the output projection; every other parameter is left untouched.
pub fn finetune_step(
    batch: &[(PatchSequence, Vec<f64>)],
    params: &mut EncoderParams,
    optimizer: &mut Adam,
) -> Result<f64, EncoderError> {
    let (loss, grad) = finetune_loss_and_grad(params, batch)?;
    let g = grad.as_slice().expect("contiguous");
    optimizer.step(vec![params.output_projection.as_slice_mut().expect("contiguous")], &[g])?;
    Ok(loss)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainSchedule {
    pub steps: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub mask_fraction: f64,
}

impl TrainSchedule {
    pub fn pretrain() -> Self {
        Self { steps: 500, batch_size: 32, lr: 1e-3, weight_decay: 0.01, mask_fraction: 0.15 }
    }

    pub fn finetune() -> Self {
        Self { steps: 500, batch_size: 64, lr: 1e-5, weight_decay: 0.01, mask_fraction: 0.15 }
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig::adamw(self.lr, self.weight_decay)
    }
}

impl Default for TrainSchedule {
    fn default() -> Self {
        Self::pretrain()
    }
}

fn sample_batch<R: Rng + ?Sized>(n: usize, size: usize, rng: &mut R) -> Vec<usize> {
    if size >= n {
        (0..n).collect()
    } else {
        index::sample(rng, n, size).into_vec()
    }
}

/// Runs `schedule.steps` masked-modeling updates; returns the per-step loss.
pub fn pretrain<R: Rng + ?Sized>(
    params: &mut EncoderParams,
    data: &[PatchSequence],
    schedule: &TrainSchedule,
    rng: &mut R,
) -> Result<Vec<f64>, EncoderError> {
    if data.is_empty() && schedule.steps > 0 {
        return Err(EncoderError::Config("pretraining needs at least one sample".into()));
    }
    let mut opt = pretrain_optimizer(params, schedule.adam());
    let mut losses = Vec::with_capacity(schedule.steps);
    for _ in 0..schedule.steps {
        let idx = sample_batch(data.len(), schedule.batch_size, rng);
        let batch: Vec<PatchSequence> = idx.iter().map(|&i| data[i].clone()).collect();
        losses.push(masked_pretrain_step(&batch, params, schedule.mask_fraction, &mut opt, rng)?);
    }
    Ok(losses)
}

/// Runs `schedule.steps` projection-head updates; returns the per-step loss.
pub fn finetune<R: Rng + ?Sized>(
    params: &mut EncoderParams,
    data: &[(PatchSequence, Vec<f64>)],
    schedule: &TrainSchedule,
    rng: &mut R,
) -> Result<Vec<f64>, EncoderError> {
    if data.is_empty() && schedule.steps > 0 {
        return Err(EncoderError::Config("fine-tuning needs at least one sample".into()));
    }
    let mut opt = finetune_optimizer(params, schedule.adam());
    let mut losses = Vec::with_capacity(schedule.steps);
    for _ in 0..schedule.steps {
        let idx = sample_batch(data.len(), schedule.batch_size, rng);
        let batch: Vec<(PatchSequence, Vec<f64>)> = idx.iter().map(|&i| data[i].clone()).collect();
        losses.push(finetune_step(&batch, params, &mut opt)?);
    }
    Ok(losses)
}

pub const LOSS_CSV_HEADER: &str = "step,loss";

pub fn write_loss_csv<W: Write>(w: &mut W, losses: &[f64]) -> io::Result<()> {
    writeln!(w, "{LOSS_CSV_HEADER}")?;
    for (i, l) in losses.iter().enumerate() {
        writeln!(w, "{},{l}", i + 1)?;
    }
    Ok(())
}
