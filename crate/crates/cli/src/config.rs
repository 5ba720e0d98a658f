//! Experiment configuration, read from TOML or JSON.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::CliError;
use ris_core::{dbm_to_watts, BlockageModel, GeometryConfig, LinkBudget, MobilityModel};
use ris_encoder::{EncoderConfig, FinetuneTarget, TrainSchedule};
use ris_hdrl::{AgentConfig, EnvConfig, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Convergence,
    SeVsPower,
    SeVsRis,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Convergence => "convergence",
            ExperimentKind::SeVsPower => "se_vs_power",
            ExperimentKind::SeVsRis => "se_vs_ris",
        }
    }
}

/// Link budget in the units results are reported in.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinkSettings {
    pub p_max_dbm: f64,
    pub noise_dbm: f64,
    /// Minimum per-user rate R_min, bits/s/Hz.
    pub r_min: f64,
}

impl Default for LinkSettings {
    fn default() -> Self {
        Self { p_max_dbm: 30.0, noise_dbm: -20.0, r_min: 2.0 }
    }
}

impl LinkSettings {
    pub fn budget(&self) -> LinkBudget {
        LinkBudget { p_max: dbm_to_watts(self.p_max_dbm), sigma2: dbm_to_watts(self.noise_dbm), r_min: self.r_min }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DynamicsSettings {
    pub blockage: BlockageModel,
    pub mobility: MobilityModel,
    pub fading_rho: f64,
}

impl Default for DynamicsSettings {
    fn default() -> Self {
        let env = EnvConfig::default();
        Self { blockage: env.blockage, mobility: env.mobility, fading_rho: env.fading_rho }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderSettings {
    /// Preferred patch length; the nearest divisor of 2·(M+1)·N is used.
    pub patch_len: usize,
    pub d_model: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_ff: usize,
    pub d_e: usize,
    pub pretrain: TrainSchedule,
    pub finetune: TrainSchedule,
    pub target: FinetuneTarget,
    pub seed: u64,
}

impl Default for EncoderSettings {
    fn default() -> Self {
        Self {
            patch_len: 12,
            d_model: 128,
            n_layers: 2,
            n_heads: 4,
            d_ff: 256,
            d_e: 32,
            pretrain: TrainSchedule::pretrain(),
            finetune: TrainSchedule::finetune(),
            target: FinetuneTarget::SelfSupervised,
            seed: 0,
        }
    }
}

impl EncoderSettings {
    /// Encoder shape for (M+1)×N channel matrices.
    pub fn encoder_config(&self, geometry: &GeometryConfig) -> Result<EncoderConfig, CliError> {
        let total = 2 * (geometry.n_ris_elements + 1) * geometry.n_bs_antennas;
        let patch_len = nearest_divisor(total, self.patch_len);
        let cfg = EncoderConfig {
            n_patches: total / patch_len,
            patch_len,
            d_model: self.d_model,
            n_layers: self.n_layers,
            n_heads: self.n_heads,
            d_ff: self.d_ff,
            d_e: self.d_e,
        };
        cfg.validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(cfg)
    }
}

/// Divisor of `total` closest to `target`; ties go to the larger divisor.
pub fn nearest_divisor(total: usize, target: usize) -> usize {
    (1..=total)
        .filter(|d| total.is_multiple_of(*d))
        .min_by_key(|&d| (d.abs_diff(target), std::cmp::Reverse(d)))
        .unwrap_or(1)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSettings {
    pub records: usize,
    pub seed_start: u64,
}

impl Default for DatasetSettings {
    fn default() -> Self {
        Self { records: 400, seed_start: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CodebookSettings {
    pub bs: usize,
    pub ris: usize,
}

impl Default for CodebookSettings {
    fn default() -> Self {
        Self { bs: 8, ris: 8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSettings {
    pub kind: ExperimentKind,
    pub power_dbm: Vec<f64>,
    pub ris_elements: Vec<usize>,
    /// Methods evaluated at each grid point: any of fm-hdrl, fm-drl, sweep.
    pub methods: Vec<String>,
}

impl Default for ExperimentSettings {
    fn default() -> Self {
        Self {
            kind: ExperimentKind::Convergence,
            power_dbm: vec![0.0, 10.0, 20.0, 30.0],
            ris_elements: vec![4, 8, 16],
            methods: vec!["fm-hdrl".into(), "fm-drl".into(), "sweep".into()],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seeds: Vec<u64>,
    pub out_dir: PathBuf,
    pub geometry: GeometryConfig,
    pub link: LinkSettings,
    pub dynamics: DynamicsSettings,
    pub encoder: EncoderSettings,
    pub dataset: DatasetSettings,
    pub agent: AgentConfig,
    pub train: TrainConfig,
    pub codebook: CodebookSettings,
    pub experiment: ExperimentSettings,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seeds: vec![1, 2, 3, 4, 5],
            out_dir: PathBuf::from("out"),
            geometry: GeometryConfig::default(),
            link: LinkSettings::default(),
            dynamics: DynamicsSettings::default(),
            encoder: EncoderSettings::default(),
            dataset: DatasetSettings::default(),
            agent: AgentConfig::default(),
            train: TrainConfig::default(),
            codebook: CodebookSettings::default(),
            experiment: ExperimentSettings::default(),
        }
    }
}

impl ExperimentConfig {
    /// Parses `.json` files as JSON and everything else as TOML.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let cfg = if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) {
            Self::from_json(&text)
        } else {
            Self::from_toml(&text)
        }
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_toml(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    pub fn from_json(text: &str) -> Result<Self, String> {
        serde_json::from_str(text).map_err(|e| e.to_string())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn env(&self) -> EnvConfig {
        EnvConfig {
            geometry: self.geometry.clone(),
            budget: self.link.budget(),
            blockage: self.dynamics.blockage,
            mobility: self.dynamics.mobility,
            fading_rho: self.dynamics.fading_rho,
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let cfg = |e: String| CliError::Config(e);
        if self.seeds.is_empty() {
            return Err(cfg("at least one seed is required".into()));
        }
        self.env().validate().map_err(|e| cfg(e.to_string()))?;
        self.agent.validate().map_err(|e| cfg(e.to_string()))?;
        self.train.validate().map_err(|e| cfg(e.to_string()))?;
        self.encoder.encoder_config(&self.geometry)?;
        if self.codebook.bs == 0 || self.codebook.ris == 0 {
            return Err(cfg("codebook sizes must be positive".into()));
        }
        if self.dataset.records == 0 {
            return Err(cfg("the dataset needs at least one record".into()));
        }
        for m in &self.experiment.methods {
            if !matches!(m.as_str(), "fm-hdrl" | "fm-drl" | "sweep") {
                return Err(cfg(format!("unknown method {m:?}")));
            }
        }
        if self.experiment.ris_elements.contains(&0) {
            return Err(cfg("RIS element counts must be positive".into()));
        }
        Ok(())
    }
}
