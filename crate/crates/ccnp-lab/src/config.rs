//! Experiment configuration: one file describes data, model, training, and
//! the evaluation grid. TOML and JSON are both accepted, chosen by extension.

use std::path::Path;

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};

use ccnp_core::datagen::DatasetSpec;
use ccnp_core::model::{ModelConfig, ModelVariant};
use ccnp_core::training::TrainConfig;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub spec: DatasetSpec,
    pub count: usize,
    #[serde(default = "default_ratio")]
    pub split_ratio: (usize, usize, usize),
    #[serde(default)]
    pub seed: u64,
}

fn default_ratio() -> (usize, usize, usize) {
    (9, 1, 1)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSection {
    #[serde(default = "default_shots")]
    pub shots: Vec<usize>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_variants")]
    pub variants: Vec<ModelVariant>,
    /// Display factor for log-likelihood table entries (value * scale).
    #[serde(default = "default_scale")]
    pub ll_scale: f64,
    /// Display factor for MSE table entries (value * scale).
    #[serde(default = "default_scale")]
    pub mse_scale: f64,
}

fn default_shots() -> Vec<usize> {
    vec![5, 10, 20]
}

fn default_seeds() -> Vec<u64> {
    (0..6).collect()
}

fn default_variants() -> Vec<ModelVariant> {
    vec![ModelVariant::Cnp, ModelVariant::AttnCnp, ModelVariant::Ccnp]
}

fn default_scale() -> f64 {
    1e2
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection {
            shots: default_shots(),
            seeds: default_seeds(),
            variants: default_variants(),
            ll_scale: default_scale(),
            mse_scale: default_scale(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub data: DataConfig,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub eval: EvalSection,
}

impl ExperimentConfig {
    pub fn validate(&self) -> anyhow::Result<()> {
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            bail!("experiment name must be a non-empty plain directory name");
        }
        if self.eval.shots.is_empty() || self.eval.seeds.is_empty() || self.eval.variants.is_empty()
        {
            bail!("eval.shots, eval.seeds and eval.variants must be non-empty");
        }
        for &v in &self.eval.variants {
            self.train
                .validate(v)
                .with_context(|| format!("train config invalid for variant {}", v.name()))?;
        }
        Ok(())
    }
}

pub fn load_config(path: &Path) -> anyhow::Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))?;
    let config: ExperimentConfig = match path.extension().and_then(|e| e.to_str()) {
        Some("toml") => toml::from_str(&text)
            .with_context(|| format!("parsing TOML config {}", path.display()))?,
        Some("json") => serde_json::from_str(&text)
            .with_context(|| format!("parsing JSON config {}", path.display()))?,
        other => bail!(
            "unsupported config extension {:?} (expected .toml or .json)",
            other
        ),
    };
    config.validate()?;
    Ok(config)
}
