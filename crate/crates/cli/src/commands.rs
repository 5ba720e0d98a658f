//! Command implementations behind the `ris` binary.

use std::fs::{self, File};
use std::io::{LineWriter, Write};
use std::path::{Path, PathBuf};

use ris_core::par::Exec;
use ris_core::{dft_bs_codebook, ris_phase_codebook, ChannelRealization};
use ris_encoder::{write_loss_csv, ChannelEncoder};
use ris_hdrl::{eval_seeds, roll_channels, sweep_slots, Algo, TrainedAgent, LOG_CSV_HEADER};
use ris_learn::Checkpoint;

use crate::config::ExperimentConfig;
use crate::experiment::{mean_std, run_experiment, train_seed, Results};
use crate::pipeline::{
    check_header, draw_records, encode_dataset, finetune_encoder, init_encoder, pretrain_encoder,
    read_dataset_file, split_plan, write_bytes,
};
use crate::plot::line_chart;
use crate::report::{labels, parse_csv, schema_line, series, summary, to_csv};
use crate::CliError;

fn create_parent(path: &Path) -> Result<(), CliError> {
    match path.parent().filter(|p| !p.as_os_str().is_empty()) {
        Some(p) => fs::create_dir_all(p).map_err(|e| CliError::io(p, e)),
        None => Ok(()),
    }
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    create_parent(path)?;
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn save_checkpoint(ck: &Checkpoint, path: &Path) -> Result<(), CliError> {
    create_parent(path)?;
    ck.save(path).map_err(|e| CliError::file(path, e))
}

fn load_checkpoint(path: &Path) -> Result<Checkpoint, CliError> {
    if !path.exists() {
        return Err(CliError::file(path, "checkpoint not found"));
    }
    Checkpoint::load(path).map_err(|e| CliError::file(path, e))
}

pub fn load_encoder(path: &Path) -> Result<ChannelEncoder, CliError> {
    ChannelEncoder::from_checkpoint(&load_checkpoint(path)?).map_err(|e| CliError::file(path, e))
}

/// `<stem>.<suffix>` next to `path`.
fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}.{suffix}"))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetFile {
    pub path: PathBuf,
    pub records: usize,
    pub seed_start: u64,
    pub checksum: String,
}

/// Writes the configured dataset, or its train/val/test splits when `split` is set.
pub fn cmd_generate(exec: Exec, cfg: &ExperimentConfig, out: &Path, split: bool) -> Result<Vec<DatasetFile>, CliError> {
    let env = cfg.env();
    let parts: Vec<(PathBuf, u64, usize)> = if split {
        split_plan(cfg.dataset.records, cfg.dataset.seed_start)
            .iter()
            .map(|s| (sibling(out, &format!("{}.bin", s.name)), s.seed_start, s.records))
            .collect()
    } else {
        vec![(out.to_path_buf(), cfg.dataset.seed_start, cfg.dataset.records)]
    };
    let mut files = Vec::with_capacity(parts.len());
    for (path, seed_start, records) in parts {
        let recs = draw_records(exec, &env, seed_start, records)?;
        let checksum = write_bytes(&path, &encode_dataset(&cfg.geometry, seed_start, &recs))?;
        files.push(DatasetFile { path, records, seed_start, checksum });
    }
    Ok(files)
}

fn load_records(cfg: &ExperimentConfig, dataset: &Path) -> Result<Vec<ChannelRealization>, CliError> {
    let (header, records) = read_dataset_file(dataset)?;
    check_header(&header, &cfg.geometry)?;
    Ok(records)
}

fn write_losses(path: &Path, kind: &str, losses: &[f64]) -> Result<(), CliError> {
    let mut buf = Vec::new();
    writeln!(buf, "{}", schema_line(kind)).and_then(|_| write_loss_csv(&mut buf, losses)).expect("in-memory write");
    create_parent(path)?;
    fs::write(path, buf).map_err(|e| CliError::io(path, e))
}

/// Masked pretraining from a fresh initialization. Writes the checkpoint and
/// `<stem>.loss.csv`; returns the per-step losses.
pub fn cmd_pretrain(cfg: &ExperimentConfig, dataset: &Path, out: &Path) -> Result<Vec<f64>, CliError> {
    let records = load_records(cfg, dataset)?;
    let mut encoder = init_encoder(&cfg.encoder, &cfg.geometry, &records)?;
    let losses = pretrain_encoder(&mut encoder, &cfg.encoder, &records)?;
    save_checkpoint(&encoder.to_checkpoint(), out)?;
    write_losses(&sibling(out, "loss.csv"), "pretrain-loss", &losses)?;
    Ok(losses)
}

/// Fine-tunes the projection head of the encoder at `encoder_in`.
pub fn cmd_finetune(
    exec: Exec,
    cfg: &ExperimentConfig,
    dataset: &Path,
    encoder_in: &Path,
    out: &Path,
) -> Result<Vec<f64>, CliError> {
    let records = load_records(cfg, dataset)?;
    let mut encoder = load_encoder(encoder_in)?;
    let want = cfg.encoder.encoder_config(&cfg.geometry)?;
    if encoder.config() != &want {
        return Err(CliError::file(encoder_in, format!("encoder {:?} does not match the configuration {want:?}", encoder.config())));
    }
    let losses = finetune_encoder(exec, &mut encoder, cfg, &records)?;
    save_checkpoint(&encoder.to_checkpoint(), out)?;
    write_losses(&sibling(out, "loss.csv"), "finetune-loss", &losses)?;
    Ok(losses)
}

pub fn log_path(out_dir: &Path, algo: Algo, seed: u64) -> PathBuf {
    out_dir.join(algo.name()).join(format!("seed_{seed}.csv"))
}

pub fn summary_path(out_dir: &Path, algo: Algo) -> PathBuf {
    out_dir.join(algo.name()).join("summary.csv")
}

pub const SUMMARY_HEADER: &str =
    "episode,cum_reward,cum_reward_std,eval_sum_se,eval_sum_se_std,critic_loss,actor_loss,violations";

fn mean_of(xs: impl Iterator<Item = Option<f64>>) -> (String, String) {
    let vals: Option<Vec<f64>> = xs.collect();
    match vals {
        Some(v) if !v.is_empty() => {
            let (m, s) = mean_std(&v);
            (m.to_string(), s.to_string())
        }
        _ => (String::new(), String::new()),
    }
}

/// Trains one agent per configured seed. Each seed's log is written line by
/// line to `<out>/<algo>/seed_<s>.csv`, its agent to `seed_<s>.ck`, and the
/// seed-averaged columns to `summary.csv`.
pub fn cmd_train(
    exec: Exec,
    cfg: &ExperimentConfig,
    encoder_path: &Path,
    algo: Algo,
    out_dir: &Path,
) -> Result<Vec<PathBuf>, CliError> {
    let encoder = load_encoder(encoder_path)?;
    let mut logs = Vec::with_capacity(cfg.seeds.len());
    let mut written = Vec::new();
    for &seed in &cfg.seeds {
        let path = log_path(out_dir, algo, seed);
        create_parent(&path)?;
        let mut w = LineWriter::new(File::create(&path).map_err(|e| CliError::io(&path, e))?);
        writeln!(w, "{}", schema_line(&format!("log-{}", algo.name())))
            .and_then(|_| writeln!(w, "{LOG_CSV_HEADER}"))
            .map_err(|e| CliError::io(&path, e))?;
        let mut io_err = None;
        let run = train_seed(exec, cfg, &encoder, algo, seed, &mut |row| {
            if let Err(e) = writeln!(w, "{}", row.csv_line()) {
                io_err.get_or_insert(e);
            }
            Ok(())
        })?;
        if let Some(e) = io_err {
            return Err(CliError::io(&path, e));
        }
        save_checkpoint(&run.agent.to_checkpoint(), &path.with_extension("ck"))?;
        written.push(path);
        logs.push(run.log);
    }
    let episodes = logs.iter().map(|l| l.rows.len()).min().unwrap_or(0);
    let mut text = schema_line(&format!("summary-{}", algo.name()));
    text.push('\n');
    text.push_str(SUMMARY_HEADER);
    text.push('\n');
    for e in 0..episodes {
        let rows: Vec<_> = logs.iter().map(|l| l.rows[e]).collect();
        let (cr, cr_std) = mean_of(rows.iter().map(|r| Some(r.cum_reward)));
        let (ev, ev_std) = mean_of(rows.iter().map(|r| r.eval_sum_se));
        let (cl, _) = mean_of(rows.iter().map(|r| r.critic_loss));
        let (al, _) = mean_of(rows.iter().map(|r| r.actor_loss));
        let (vi, _) = mean_of(rows.iter().map(|r| Some(r.violations as f64)));
        text.push_str(&format!("{},{cr},{cr_std},{ev},{ev_std},{cl},{al},{vi}\n", rows[0].episode));
    }
    let summary = summary_path(out_dir, algo);
    write_text(&summary, &text)?;
    written.push(summary);
    Ok(written)
}

/// Loads an agent written by [`cmd_train`].
pub fn load_agent(path: &Path) -> Result<TrainedAgent, CliError> {
    TrainedAgent::from_checkpoint(&load_checkpoint(path)?).map_err(|e| CliError::file(path, e))
}

/// Beam sweep over every acted slot of the held-out episodes. Writes
/// `seed_index,slot,sum_se` rows and returns the mean.
pub fn cmd_sweep(exec: Exec, cfg: &ExperimentConfig, out: &Path) -> Result<f64, CliError> {
    let env = cfg.env();
    let seeds = eval_seeds(cfg.train.eval_seed_base, cfg.train.eval_seeds);
    let mut acted = Vec::with_capacity(seeds.len());
    for &s in &seeds {
        let (mut realizations, _) = roll_channels(&env, s, cfg.train.macro_slots_per_episode, cfg.agent.macro_len)?;
        realizations.pop();
        acted.push(realizations);
    }
    let slices: Vec<&[ChannelRealization]> = acted.iter().map(|v| v.as_slice()).collect();
    let bs = dft_bs_codebook(cfg.geometry.n_bs_antennas, cfg.codebook.bs);
    let ris = ris_phase_codebook(cfg.geometry.n_ris_elements, cfg.codebook.ris);
    let per_slot = sweep_slots(exec, &slices, &bs, &ris, &env.budget)?;
    let mut text = schema_line("sweep");
    text.push_str("\nseed_index,slot,sum_se\n");
    let mut all = Vec::new();
    for (i, slots) in per_slot.iter().enumerate() {
        for (t, v) in slots.iter().enumerate() {
            text.push_str(&format!("{i},{t},{v}\n"));
            all.push(*v);
        }
    }
    write_text(out, &text)?;
    Ok(mean_std(&all).0)
}

pub fn results_path(out_dir: &Path, results: &Results) -> PathBuf {
    out_dir.join(format!("{}.csv", results.kind().name()))
}

pub fn render_plot(results: &Results) -> String {
    let (title, x, y) = labels(results.kind());
    line_chart(title, x, y, &series(results))
}

/// Runs the configured experiment and writes `<out>/<kind>.csv`, plus
/// `<kind>.svg` when `plot` is set.
pub fn cmd_experiment(
    exec: Exec,
    cfg: &ExperimentConfig,
    encoder_path: Option<&Path>,
    out_dir: &Path,
    plot: bool,
) -> Result<(PathBuf, Results), CliError> {
    let encoder = encoder_path.map(load_encoder).transpose()?;
    let results = run_experiment(exec, cfg, encoder.as_ref())?;
    let path = results_path(out_dir, &results);
    write_text(&path, &to_csv(&results))?;
    if plot {
        write_text(&path.with_extension("svg"), &render_plot(&results))?;
    }
    Ok((path, results))
}

/// Parses result CSVs, returns their summaries and optionally renders plots beside them.
pub fn cmd_report(paths: &[PathBuf], plot: bool) -> Result<String, CliError> {
    let mut out = String::new();
    for path in paths {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let results = parse_csv(&text).map_err(|e| CliError::file(path, e))?;
        out.push_str(&format!("{}\n{}\n", path.display(), summary(&results)));
        if plot {
            write_text(&path.with_extension("svg"), &render_plot(&results))?;
        }
    }
    Ok(out)
}
