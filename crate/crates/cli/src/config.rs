//! One JSON config file drives every pipeline stage; command-line flags
//! override individual keys and the `TVA_SEED` environment variable overrides
//! the config's global seed.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use tva_core::datagen::{ProbeConfig, SynthConfig};
use tva_core::decision::UtilityParams;
use tva_core::neuroevolution::EvolveConfig;
use tva_core::trace::{CH_COST, CH_LATENCY};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Ernn,
    Arima,
    Mlp,
    Lstm,
    Persistence,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Ernn => "ernn",
            ModelKind::Arima => "arima",
            ModelKind::Mlp => "mlp",
            ModelKind::Lstm => "lstm",
            ModelKind::Persistence => "persistence",
        }
    }
}

/// Data preparation shared by `train` and `simulate`: the trace is merged
/// with a URT trace if configured, downsampled, split chronologically,
/// normalized against the training span and windowed.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct PrepareConfig {
    /// Chronological (train, test, validation) fractions.
    pub fractions: (f64, f64, f64),
    /// Explicit split counts; takes precedence over `fractions` when set.
    pub counts: Option<(usize, usize, usize)>,
    pub seq_len: usize,
    /// Keep every nth record (URT #2 sampling-rate reduction).
    pub downsample_n: Option<usize>,
    /// Merge URT channels from this trace CSV before splitting.
    pub urt_csv: Option<PathBuf>,
    /// Input channels; defaults to every channel present in the trace.
    pub input_channels: Option<Vec<String>>,
    pub target_channels: Vec<String>,
}

impl Default for PrepareConfig {
    fn default() -> Self {
        PrepareConfig {
            fractions: (0.7, 0.15, 0.15),
            counts: None,
            seq_len: 16,
            downsample_n: None,
            urt_csv: None,
            input_channels: None,
            target_channels: vec![CH_LATENCY.to_string(), CH_COST.to_string()],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub model: ModelKind,
    pub evolve: EvolveConfig,
    pub mlp_hidden: usize,
    pub lstm_hidden: usize,
    /// BPTT settings for the fixed-architecture baselines.
    pub baseline_epochs: usize,
    pub baseline_lr: f64,
    pub baseline_clip: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            model: ModelKind::Ernn,
            evolve: EvolveConfig::default(),
            mlp_hidden: 100,
            lstm_hidden: 32,
            baseline_epochs: 20,
            baseline_lr: 0.05,
            baseline_clip: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct EvaluateConfig {
    pub mape_epsilon: f64,
}

impl Default for EvaluateConfig {
    fn default() -> Self {
        EvaluateConfig { mape_epsilon: 1e-9 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct RunConfig {
    /// Global seed threaded to every stochastic stage; overrides the
    /// per-section seeds when set.
    pub seed: Option<u64>,
    pub synth: SynthConfig,
    pub probe: ProbeConfig,
    pub prepare: PrepareConfig,
    pub train: TrainConfig,
    pub decide: UtilityParams,
    pub evaluate: EvaluateConfig,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::usage(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::usage(format!("invalid config {}: {e}", path.display())))?;
        if let Ok(env_seed) = std::env::var("TVA_SEED") {
            let parsed = env_seed
                .parse::<u64>()
                .map_err(|_| CliError::usage(format!("TVA_SEED is not a u64: {env_seed:?}")))?;
            cfg.seed = Some(parsed);
        }
        Ok(cfg)
    }

    /// Resolve the seed for a stage: CLI flag beats `TVA_SEED` beats the
    /// config's global seed beats the per-section default.
    pub fn effective_seed(&self, flag: Option<u64>, section_default: u64) -> u64 {
        flag.or(self.seed).unwrap_or(section_default)
    }
}
