//! The three experiment families and the per-seed training runs behind them.

use ris_core::par::{self, Exec};
use ris_core::{dft_bs_codebook, ris_phase_codebook};
use ris_encoder::ChannelEncoder;
use ris_hdrl::{
    episodes_to_fraction, eval_traces, sweep_baseline, train, Algo, EpisodeLog, HdrlError, TrainedAgent,
    TrainingLog,
};

use crate::config::{ExperimentConfig, ExperimentKind};
use crate::pipeline::build_encoder;
use crate::CliError;

/// Trailing window of the convergence moving average, in episodes.
pub const CONVERGENCE_WINDOW: usize = 50;
/// Episodes averaged for a run's "final" reward level.
pub const FINAL_WINDOW: usize = 100;
pub const CONVERGENCE_FRACTION: f64 = 0.95;
/// Evaluation points within this many final episodes make up a run's score.
pub const FINAL_EVAL_WINDOW: usize = 100;

pub const SWEEP_METHOD: &str = "sweep";

#[derive(Debug, Clone)]
pub struct SeedRun {
    pub seed: u64,
    pub log: TrainingLog,
    pub agent: TrainedAgent,
}

impl SeedRun {
    /// Mean greedy eval SE over the final evaluation window.
    pub fn score(&self) -> Result<f64, CliError> {
        self.log.final_eval(FINAL_EVAL_WINDOW).ok_or_else(|| {
            CliError::Config("scoring a run needs greedy evaluation; set train.eval_every > 0".into())
        })
    }

    /// Episodes needed to reach 95% of the run's own final reward level.
    pub fn convergence_episode(&self) -> Option<usize> {
        convergence_episode(&self.log.rewards())
    }
}

pub fn convergence_episode(rewards: &[f64]) -> Option<usize> {
    let window = CONVERGENCE_WINDOW.min(rewards.len());
    let final_window = FINAL_WINDOW.min(rewards.len());
    episodes_to_fraction(rewards, window, final_window, CONVERGENCE_FRACTION)
}

/// Trains `algo` under one run seed, streaming log rows to `on_episode`.
pub fn train_seed(
    exec: Exec,
    cfg: &ExperimentConfig,
    encoder: &ChannelEncoder,
    algo: Algo,
    seed: u64,
    on_episode: &mut dyn FnMut(&EpisodeLog) -> Result<(), HdrlError>,
) -> Result<SeedRun, CliError> {
    let out = train(algo, &cfg.env(), &cfg.agent, &cfg.train, encoder, seed, exec, on_episode)?;
    Ok(SeedRun { seed, log: out.log, agent: out.agent })
}

/// One run per configured seed, in seed order.
pub fn train_seeds(
    exec: Exec,
    cfg: &ExperimentConfig,
    encoder: &ChannelEncoder,
    algo: Algo,
) -> Result<Vec<SeedRun>, CliError> {
    par::try_map_indexed(exec, cfg.seeds.len(), |i| train_seed(exec, cfg, encoder, algo, cfg.seeds[i], &mut |_| Ok(())))
}

/// Beam-sweep SE on the held-out evaluation traces.
pub fn sweep_score(exec: Exec, cfg: &ExperimentConfig, encoder: &ChannelEncoder) -> Result<f64, CliError> {
    let env = cfg.env();
    let traces = eval_traces(exec, &env, encoder, &cfg.agent, &cfg.train)?;
    let bs = dft_bs_codebook(cfg.geometry.n_bs_antennas, cfg.codebook.bs);
    let ris = ris_phase_codebook(cfg.geometry.n_ris_elements, cfg.codebook.ris);
    Ok(sweep_baseline(exec, &traces, &bs, &ris, &env.budget)?)
}

/// Mean and sample standard deviation (0 for fewer than two values).
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Square root of the mean of the groups' sample variances.
pub fn pooled_std(groups: &[&[f64]]) -> f64 {
    let vars: Vec<f64> = groups.iter().map(|g| mean_std(g).1.powi(2)).collect();
    (vars.iter().sum::<f64>() / vars.len().max(1) as f64).sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRow {
    pub algo: String,
    pub episode: usize,
    pub mean: f64,
    pub std: f64,
}

/// Per-episode mean and std of the cumulative reward across seeds.
pub fn convergence_rows(algo: Algo, runs: &[SeedRun]) -> Vec<ConvergenceRow> {
    let episodes = runs.iter().map(|r| r.log.rows.len()).min().unwrap_or(0);
    (0..episodes)
        .map(|e| {
            let xs: Vec<f64> = runs.iter().map(|r| r.log.rows[e].cum_reward).collect();
            let (mean, std) = mean_std(&xs);
            ConvergenceRow { algo: algo.name().to_string(), episode: e + 1, mean, std }
        })
        .collect()
}

/// One (grid point, method) cell of an SE experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct SeRow {
    pub x: f64,
    pub method: String,
    pub mean: f64,
    pub std: f64,
    /// Per-seed scores behind mean and std.
    pub scores: Vec<f64>,
}

impl SeRow {
    pub fn new(x: f64, method: &str, scores: Vec<f64>) -> Self {
        let (mean, std) = mean_std(&scores);
        Self { x, method: method.to_string(), mean, std, scores }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Results {
    Convergence(Vec<ConvergenceRow>),
    Se { kind: ExperimentKind, rows: Vec<SeRow> },
}

impl Results {
    pub fn kind(&self) -> ExperimentKind {
        match self {
            Results::Convergence(_) => ExperimentKind::Convergence,
            Results::Se { kind, .. } => *kind,
        }
    }
}

fn agent_algos(cfg: &ExperimentConfig) -> Result<Vec<Algo>, CliError> {
    cfg.experiment
        .methods
        .iter()
        .filter(|m| m.as_str() != SWEEP_METHOD)
        .map(|m| m.parse::<Algo>().map_err(|e| CliError::Config(e.to_string())))
        .collect()
}

/// Scores every configured method at one grid point.
pub fn se_cells(exec: Exec, cfg: &ExperimentConfig, encoder: &ChannelEncoder, x: f64) -> Result<Vec<SeRow>, CliError> {
    let mut rows = Vec::with_capacity(cfg.experiment.methods.len());
    for method in &cfg.experiment.methods {
        let scores = if method == SWEEP_METHOD {
            // the held-out traces do not depend on the run seed
            vec![sweep_score(exec, cfg, encoder)?; cfg.seeds.len()]
        } else {
            let algo: Algo = method.parse().map_err(|e: HdrlError| CliError::Config(e.to_string()))?;
            train_seeds(exec, cfg, encoder, algo)?.iter().map(SeedRun::score).collect::<Result<_, _>>()?
        };
        rows.push(SeRow::new(x, method, scores));
    }
    Ok(rows)
}

/// Runs `cfg.experiment.kind`. `encoder` replaces the in-line encoder build
/// where the geometry matches it; the RIS-size family always builds one per M.
pub fn run_experiment(exec: Exec, cfg: &ExperimentConfig, encoder: Option<&ChannelEncoder>) -> Result<Results, CliError> {
    cfg.validate()?;
    let shared = || -> Result<ChannelEncoder, CliError> {
        match encoder {
            Some(e) => Ok(e.clone()),
            None => Ok(build_encoder(exec, cfg)?.encoder),
        }
    };
    match cfg.experiment.kind {
        ExperimentKind::Convergence => {
            let enc = shared()?;
            let mut rows = Vec::new();
            for algo in agent_algos(cfg)? {
                rows.extend(convergence_rows(algo, &train_seeds(exec, cfg, &enc, algo)?));
            }
            Ok(Results::Convergence(rows))
        }
        ExperimentKind::SeVsPower => {
            let enc = shared()?;
            let mut rows = Vec::new();
            for &p in &cfg.experiment.power_dbm {
                let mut point = cfg.clone();
                point.link.p_max_dbm = p;
                rows.extend(se_cells(exec, &point, &enc, p)?);
            }
            Ok(Results::Se { kind: ExperimentKind::SeVsPower, rows })
        }
        ExperimentKind::SeVsRis => {
            let mut rows = Vec::new();
            for &m in &cfg.experiment.ris_elements {
                let mut point = cfg.clone();
                point.geometry.n_ris_elements = m;
                point.validate()?;
                let enc = build_encoder(exec, &point)?.encoder;
                rows.extend(se_cells(exec, &point, &enc, m as f64)?);
            }
            Ok(Results::Se { kind: ExperimentKind::SeVsRis, rows })
        }
    }
}
