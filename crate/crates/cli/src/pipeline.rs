//! Dataset generation and encoder training shared by the commands.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::config::{EncoderSettings, ExperimentConfig};
use crate::CliError;
use ris_core::dataset::{read_dataset, write_dataset, DatasetHeader};
use ris_core::par::{self, Exec};
use ris_core::seed::{derive, rng};
use ris_core::{
    dft_bs_codebook, generate_channels, ris_phase_codebook, spawn_users, ChannelRealization, GeometryConfig,
};
use ris_encoder::{
    finetune, pretrain, sweep_targets, ChannelEncoder, EncoderParams, FinetuneTarget, InputScaling, PatchSequence,
    PcaSketch,
};
use ris_hdrl::EnvConfig;

/// Record drawn from environment seed `s`: users from stream 0, channels from stream 1.
pub fn draw_record(env: &EnvConfig, s: u64) -> Result<ChannelRealization, CliError> {
    let users = spawn_users(&env.geometry, &env.blockage, &env.mobility, derive(s, 0));
    Ok(generate_channels(&env.geometry, &users, derive(s, 1))?)
}

/// Records for seeds `seed_start .. seed_start + count`.
pub fn draw_records(exec: Exec, env: &EnvConfig, seed_start: u64, count: usize) -> Result<Vec<ChannelRealization>, CliError> {
    par::try_map_indexed(exec, count, |i| draw_record(env, seed_start + i as u64))
}

/// One contiguous block of a dataset's seed range.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Split {
    pub name: &'static str,
    pub seed_start: u64,
    pub records: usize,
}

/// 70 / 15 / 15 split into disjoint contiguous seed ranges.
pub fn split_plan(records: usize, seed_start: u64) -> [Split; 3] {
    let train = (records * 70).div_ceil(100);
    let val = ((records - train) / 2).min(records - train);
    let test = records - train - val;
    [
        Split { name: "train", seed_start, records: train },
        Split { name: "val", seed_start: seed_start + train as u64, records: val },
        Split { name: "test", seed_start: seed_start + (train + val) as u64, records: test },
    ]
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Serializes a dataset to memory; the checksum is taken over these bytes.
pub fn encode_dataset(geometry: &GeometryConfig, seed_start: u64, records: &[ChannelRealization]) -> Vec<u8> {
    let header = DatasetHeader::new(
        geometry.n_bs_antennas,
        geometry.n_ris_elements,
        geometry.n_users,
        records.len(),
        seed_start,
    );
    let mut bytes = Vec::with_capacity(header.file_bytes());
    write_dataset(&mut bytes, &header, records).expect("records generated for this geometry");
    bytes
}

/// Writes `bytes` to `path`, creating parent directories; returns the checksum.
pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<String, CliError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    }
    let mut w = BufWriter::new(File::create(path).map_err(|e| CliError::io(path, e))?);
    w.write_all(bytes).and_then(|_| w.flush()).map_err(|e| CliError::io(path, e))?;
    Ok(sha256_hex(bytes))
}

pub fn read_dataset_file(path: &Path) -> Result<(DatasetHeader, Vec<ChannelRealization>), CliError> {
    let mut r = BufReader::new(File::open(path).map_err(|e| CliError::io(path, e))?);
    read_dataset(&mut r).map_err(|e| CliError::file(path, e))
}

/// Rejects datasets whose dimensions differ from the configured geometry.
pub fn check_header(header: &DatasetHeader, geometry: &GeometryConfig) -> Result<(), CliError> {
    let want = (geometry.n_bs_antennas, geometry.n_ris_elements, geometry.n_users);
    let got = (header.n, header.m, header.k);
    if want != got {
        return Err(CliError::Config(format!(
            "dataset has (N, M, K) = {got:?} but the configuration expects {want:?}"
        )));
    }
    Ok(())
}

/// Fresh encoder whose input scaling is fitted on `records`.
pub fn init_encoder(
    settings: &EncoderSettings,
    geometry: &GeometryConfig,
    records: &[ChannelRealization],
) -> Result<ChannelEncoder, CliError> {
    let cfg = settings.encoder_config(geometry)?;
    let params = EncoderParams::init(cfg, &mut rng(derive(settings.seed, 0)))?;
    Ok(ChannelEncoder::new(params, InputScaling::fit(records)))
}

pub fn sequences(encoder: &ChannelEncoder, records: &[ChannelRealization]) -> Result<Vec<PatchSequence>, CliError> {
    let mut out = Vec::with_capacity(records.len() * records.first().map_or(0, |r| r.n_users()));
    for r in records {
        out.extend(encoder.sequences(r)?);
    }
    Ok(out)
}

/// Masked pretraining on every user matrix of `records`; returns per-step losses.
pub fn pretrain_encoder(
    encoder: &mut ChannelEncoder,
    settings: &EncoderSettings,
    records: &[ChannelRealization],
) -> Result<Vec<f64>, CliError> {
    let data = sequences(encoder, records)?;
    Ok(pretrain(&mut encoder.params, &data, &settings.pretrain, &mut rng(derive(settings.seed, 1)))?)
}

/// Projection-head fine-tuning toward the configured target; returns per-step losses.
pub fn finetune_encoder(
    exec: Exec,
    encoder: &mut ChannelEncoder,
    cfg: &ExperimentConfig,
    records: &[ChannelRealization],
) -> Result<Vec<f64>, CliError> {
    let settings = &cfg.encoder;
    let data = sequences(encoder, records)?;
    let d_e = encoder.d_e();
    let targets: Vec<Vec<f64>> = match settings.target {
        FinetuneTarget::SelfSupervised => {
            let pca = PcaSketch::fit(&data, d_e)?;
            data.iter().map(|s| pca.transform(s)).collect()
        }
        FinetuneTarget::Supervised => {
            let bs = dft_bs_codebook(cfg.geometry.n_bs_antennas, cfg.codebook.bs);
            let ris = ris_phase_codebook(cfg.geometry.n_ris_elements, cfg.codebook.ris);
            let budget = cfg.link.budget();
            let k = cfg.geometry.n_users;
            let per_record = par::try_map_indexed(exec, records.len(), |i| {
                (0..k).map(|u| sweep_targets(&records[i], u, &bs, &ris, &budget, d_e)).collect::<Result<Vec<_>, _>>()
            })?;
            per_record.into_iter().flatten().collect()
        }
    };
    let pairs: Vec<(PatchSequence, Vec<f64>)> = data.into_iter().zip(targets).collect();
    Ok(finetune(&mut encoder.params, &pairs, &settings.finetune, &mut rng(derive(settings.seed, 2)))?)
}

pub struct EncoderBuild {
    pub encoder: ChannelEncoder,
    pub pretrain_losses: Vec<f64>,
    pub finetune_losses: Vec<f64>,
}

/// Draws the training split, pretrains and fine-tunes an encoder for `cfg.geometry`.
pub fn build_encoder(exec: Exec, cfg: &ExperimentConfig) -> Result<EncoderBuild, CliError> {
    let [train, ..] = split_plan(cfg.dataset.records, cfg.dataset.seed_start);
    let records = draw_records(exec, &cfg.env(), train.seed_start, train.records)?;
    let mut encoder = init_encoder(&cfg.encoder, &cfg.geometry, &records)?;
    let pretrain_losses = pretrain_encoder(&mut encoder, &cfg.encoder, &records)?;
    let finetune_losses = finetune_encoder(exec, &mut encoder, cfg, &records)?;
    Ok(EncoderBuild { encoder, pretrain_losses, finetune_losses })
}
