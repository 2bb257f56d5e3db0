//! Saved-model format: one JSON document tagged by model kind. Network
//! models carry everything `simulate` needs to reproduce training-time
//! preprocessing (normalization parameters and window length).

use std::path::Path;

use serde::{Deserialize, Serialize};

use tva_core::baselines::Arima110Model;
use tva_core::rnn::RnnGenome;
use tva_core::trace::NormParams;

use crate::CliError;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GenomeModel {
    pub genome: RnnGenome,
    pub norm: NormParams,
    pub seq_len: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum ModelFile {
    Persistence,
    Arima {
        latency: Arima110Model,
        cost: Arima110Model,
    },
    Ernn(GenomeModel),
    Mlp(GenomeModel),
    Lstm(GenomeModel),
}

impl ModelFile {
    pub fn name(&self) -> &'static str {
        match self {
            ModelFile::Persistence => "persistence",
            ModelFile::Arima { .. } => "arima",
            ModelFile::Ernn(_) => "ernn",
            ModelFile::Mlp(_) => "mlp",
            ModelFile::Lstm(_) => "lstm",
        }
    }

    pub fn save(&self, path: &Path) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(self)
            .map_err(|e| CliError::runtime(format!("serialize model: {e}")))?;
        text.push('\n');
        std::fs::write(path, text)
            .map_err(|e| CliError::runtime(format!("write model {}: {e}", path.display())))
    }

    pub fn load(path: &Path) -> Result<ModelFile, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::usage(format!("cannot read model {}: {e}", path.display())))?;
        let model: ModelFile = serde_json::from_str(&text)
            .map_err(|e| CliError::usage(format!("invalid model file {}: {e}", path.display())))?;
        if let ModelFile::Ernn(m) | ModelFile::Mlp(m) | ModelFile::Lstm(m) = &model {
            m.genome.validate().map_err(|e| {
                CliError::usage(format!("invalid genome in {}: {e}", path.display()))
            })?;
        }
        Ok(model)
    }
}
