use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use hmpnn::features::FeatureConfig;
use hmpnn::harness::HyperGrid;
use hmpnn::models::DEFAULT_HIDDEN_DIM;
use hmpnn::synth::GenConfig;

use crate::CliError;

/// One run's configuration, read from `--config` and then overridden by
/// flags.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub jobs: Option<usize>,
    /// Graph container directory.
    pub graph: Option<PathBuf>,
    /// Entity feature table (`features_individual.csv`).
    pub features: Option<PathBuf>,
    pub model: ModelSection,
    pub grid: HyperGrid,
    pub generate: GenConfig,
    pub featurize: FeatureConfig,
    /// Fraction of labeled nodes in the training split.
    pub train_fraction: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub kind: Option<String>,
    pub layers: Option<usize>,
    pub hidden_dim: usize,
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection {
            kind: None,
            layers: None,
            hidden_dim: DEFAULT_HIDDEN_DIM,
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(RunConfig::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("config {}: {e}", path.display())))
    }

    pub fn seed(&self) -> Result<u64, CliError> {
        self.seed
            .ok_or_else(|| CliError::Config("a seed is required (--seed or \"seed\" in the config)".into()))
    }

    pub fn out(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from("."))
    }

    pub fn graph(&self) -> Result<&Path, CliError> {
        self.graph
            .as_deref()
            .ok_or_else(|| CliError::Config("a graph container is required (--graph)".into()))
    }

    pub fn train_fraction(&self) -> f64 {
        self.train_fraction.unwrap_or(0.7)
    }
}
