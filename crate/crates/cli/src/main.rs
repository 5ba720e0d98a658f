use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use ris_cli::commands::{
    cmd_experiment, cmd_finetune, cmd_generate, cmd_pretrain, cmd_report, cmd_sweep, cmd_train,
};
use ris_cli::{CliError, ExperimentConfig};
use ris_core::par::Exec;
use ris_hdrl::Algo;

#[derive(Debug, Parser)]
#[command(name = "ris", version, about = "RIS-assisted downlink simulator with hierarchical DRL controllers")]
struct Cli {
    /// TOML or JSON experiment configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Comma-separated run seeds, overriding the configuration.
    #[arg(long, global = true, value_delimiter = ',', alias = "seed")]
    seeds: Option<Vec<u64>>,
    /// Output file or directory, depending on the command.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for data-parallel work; 1 runs sequentially.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Also render SVG line charts.
    #[arg(long, global = true)]
    plot: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a binary channel dataset.
    Generate {
        /// Write 70/15/15 train/val/test files with disjoint seed ranges.
        #[arg(long)]
        split: bool,
    },
    /// Masked-channel pretraining from a fresh encoder.
    Pretrain {
        #[arg(long)]
        dataset: PathBuf,
    },
    /// Fine-tune the projection head of a pretrained encoder.
    Finetune {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        encoder: PathBuf,
    },
    /// Train an agent per seed.
    Train {
        #[arg(long)]
        encoder: PathBuf,
        #[arg(long, default_value = "fm-hdrl")]
        algo: Algo,
    },
    /// Codebook beam sweep on the held-out episodes.
    Sweep,
    /// Run the configured experiment family.
    Experiment {
        /// Reuse an encoder checkpoint instead of training one in-line.
        #[arg(long)]
        encoder: Option<PathBuf>,
    },
    /// Summarize result CSVs.
    Report { files: Vec<PathBuf> },
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seeds) = cli.seeds.clone() {
        cfg.seeds = seeds;
    }
    if let Some(out) = &cli.out {
        cfg.out_dir = out.clone();
    }
    cfg.validate()?;
    let exec = match cli.threads {
        Some(0) => return Err(CliError::Config("--threads must be positive".into())),
        Some(1) => Exec::Sequential,
        #[cfg(feature = "parallel")]
        Some(n) => {
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
                .map_err(|e| CliError::Config(e.to_string()))?;
            Exec::Parallel
        }
        // built without rayon: every run is sequential
        #[cfg(not(feature = "parallel"))]
        Some(_) => Exec::Sequential,
        None => Exec::Parallel,
    };
    let out = cfg.out_dir.clone();
    match cli.command {
        Command::Generate { split } => {
            let path = if cli.out.is_some() { out } else { out.join("channels.bin") };
            for f in cmd_generate(exec, &cfg, &path, split)? {
                println!("{}: {} records (seeds {}..), sha256 {}", f.path.display(), f.records, f.seed_start, f.checksum);
            }
        }
        Command::Pretrain { dataset } => {
            let path = if cli.out.is_some() { out } else { out.join("encoder.ck") };
            let losses = cmd_pretrain(&cfg, &dataset, &path)?;
            report_losses(&path, &losses);
        }
        Command::Finetune { dataset, encoder } => {
            let path = if cli.out.is_some() { out } else { out.join("encoder_ft.ck") };
            let losses = cmd_finetune(exec, &cfg, &dataset, &encoder, &path)?;
            report_losses(&path, &losses);
        }
        Command::Train { encoder, algo } => {
            for p in cmd_train(exec, &cfg, &encoder, algo, &out)? {
                println!("{}", p.display());
            }
        }
        Command::Sweep => {
            let path = if cli.out.is_some() { out } else { out.join("sweep.csv") };
            let mean = cmd_sweep(exec, &cfg, &path)?;
            println!("{}: mean sum SE {mean:.4} bits/s/Hz", path.display());
        }
        Command::Experiment { encoder } => {
            let (path, _) = cmd_experiment(exec, &cfg, encoder.as_deref(), &out, cli.plot)?;
            print!("{}", cmd_report(std::slice::from_ref(&path), false)?);
        }
        Command::Report { files } => print!("{}", cmd_report(&files, cli.plot)?),
    }
    Ok(())
}

fn report_losses(path: &std::path::Path, losses: &[f64]) {
    match (losses.first(), losses.last()) {
        (Some(a), Some(b)) => println!("{}: {} steps, loss {a:.5} -> {b:.5}", path.display(), losses.len()),
        _ => println!("{}: 0 steps", path.display()),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
