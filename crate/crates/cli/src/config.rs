//! Pipeline configuration: one TOML file, then command-line overrides.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use mkg_core::finetune::FinetuneConfig;
use mkg_core::negatives::{NegativeStrategy, DEFAULT_TAU};
use mkg_core::pipeline::ExperimentConfig;
use mkg_core::split::DEFAULT_RATIOS;
use mkg_core::synth::SynthConfig;
use mkg_core::train::TrainConfig;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    /// Defaults to `<work_dir>/nodes.jsonl`.
    pub nodes: Option<PathBuf>,
    pub edges: Option<PathBuf>,
    pub pairs: Option<PathBuf>,
    pub work_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSection {
    pub ratios: [f64; 3],
    pub seed: u64,
}

impl Default for SplitSection {
    fn default() -> Self {
        Self {
            ratios: DEFAULT_RATIOS,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureSection {
    pub min_freq: usize,
    pub pca_dim: usize,
}

impl Default for FeatureSection {
    fn default() -> Self {
        Self {
            min_freq: 2,
            pca_dim: 100,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum StrategyName {
    Random,
    Biased,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NegativeSection {
    pub strategy: StrategyName,
    /// Jaccard threshold for biased negatives.
    pub tau: f64,
    pub same_machine: bool,
}

impl Default for NegativeSection {
    fn default() -> Self {
        Self {
            strategy: StrategyName::Random,
            tau: DEFAULT_TAU,
            same_machine: false,
        }
    }
}

impl NegativeSection {
    pub fn resolve(&self, name: StrategyName) -> NegativeStrategy {
        match name {
            StrategyName::Random => NegativeStrategy::Random,
            StrategyName::Biased => NegativeStrategy::BiasedJaccard {
                tau: self.tau,
                same_machine: self.same_machine,
            },
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Seed for training and fine-tuning; replicas use seed, seed + 1, ...
    pub seed: u64,
    pub paths: Paths,
    pub synth: SynthConfig,
    pub split: SplitSection,
    pub features: FeatureSection,
    pub train: TrainConfig,
    /// `finetune.strategy` and `finetune.seed` are set from `[negatives]`
    /// and `seed`.
    pub finetune: FinetuneConfig,
    pub negatives: NegativeSection,
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("invalid config {}", path.display()))
    }

    /// Copies the global seed and strategy into the stage configs and
    /// validates everything.
    pub fn finalize(&mut self) -> Result<()> {
        self.train.seed = self.seed;
        self.finetune.seed = self.seed;
        self.finetune.strategy = self.negatives.resolve(self.negatives.strategy);
        self.synth.validate()?;
        let sum: f64 = self.split.ratios.iter().sum();
        if self.split.ratios.iter().any(|&r| !(0.0..=1.0).contains(&r)) || (sum - 1.0).abs() > 1e-9 {
            bail!("configuration error: split.ratios must be non-negative and sum to 1");
        }
        if self.features.pca_dim == 0 {
            bail!("configuration error: features.pca_dim must be positive");
        }
        if self.features.min_freq == 0 {
            bail!("configuration error: features.min_freq must be positive");
        }
        if !(0.0..=1.0).contains(&self.negatives.tau) {
            bail!("configuration error: negatives.tau must lie in [0, 1]");
        }
        self.experiment().validate()?;
        Ok(())
    }

    pub fn experiment(&self) -> ExperimentConfig {
        ExperimentConfig {
            split_ratios: self.split.ratios,
            split_seed: self.split.seed,
            min_freq: self.features.min_freq,
            pca_dim: self.features.pca_dim,
            train: self.train.clone(),
            finetune: self.finetune.clone(),
        }
    }
}
