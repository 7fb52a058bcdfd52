//! Artifact layout under the work directory and run manifests.

use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use mkg_core::io::{file_sha256, write_json};
use serde::Serialize;

use crate::config::{PipelineConfig, StrategyName};
use mkg_core::kge::ModelKind;

pub const NODES: &str = "nodes.jsonl";
pub const EDGES: &str = "edges.csv";
pub const PAIRS: &str = "pairs.csv";
pub const SPLIT: &str = "split.json";
pub const STATS: &str = "graph_stats.json";
pub const FEATURES: &str = "features.csv";
pub const VOCABULARY: &str = "vocabulary.json";
pub const PROJECTION: &str = "projection.mkg";
pub const HOMOPHILY: &str = "homophily.json";
pub const EVAL_REPORT: &str = "eval_report.json";
pub const EVAL_TABLE: &str = "eval_table.txt";
pub const K_SWEEP: &str = "k_sweep.json";

pub struct WorkDir {
    pub root: PathBuf,
}

impl WorkDir {
    pub fn open(root: PathBuf) -> Result<Self> {
        std::fs::create_dir_all(root.join("manifests"))
            .with_context(|| format!("creating work dir {}", root.display()))?;
        Ok(Self { root })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn embeddings(&self, model: ModelKind) -> PathBuf {
        self.path(&format!("embeddings_{model}.mkg"))
    }

    pub fn train_log(&self, model: ModelKind) -> PathBuf {
        self.path(&format!("train_{model}.json"))
    }

    pub fn ensemble(&self, model: ModelKind, strategy: StrategyName) -> PathBuf {
        self.path(&format!("ensemble_{model}_{}.mkg", strategy_name(strategy)))
    }

    pub fn finetune_log(&self, model: ModelKind, strategy: StrategyName) -> PathBuf {
        self.path(&format!("finetune_{model}_{}.json", strategy_name(strategy)))
    }

    pub fn metrics(&self, model: ModelKind, strategy: Option<StrategyName>) -> PathBuf {
        match strategy {
            Some(s) => self.path(&format!("metrics_{model}_{}.json", strategy_name(s))),
            None => self.path(&format!("metrics_{model}_topology.json")),
        }
    }

    pub fn nodes(&self, cfg: &PipelineConfig) -> PathBuf {
        cfg.paths.nodes.clone().unwrap_or_else(|| self.path(NODES))
    }

    pub fn edges(&self, cfg: &PipelineConfig) -> PathBuf {
        cfg.paths.edges.clone().unwrap_or_else(|| self.path(EDGES))
    }

    pub fn pairs(&self, cfg: &PipelineConfig) -> PathBuf {
        cfg.paths.pairs.clone().unwrap_or_else(|| self.path(PAIRS))
    }
}

pub fn strategy_name(s: StrategyName) -> &'static str {
    match s {
        StrategyName::Random => "random",
        StrategyName::Biased => "biased",
    }
}

/// Fails with a message naming the command that produces `path`.
pub fn require(path: &Path, producer: &str) -> Result<()> {
    if !path.is_file() {
        bail!("missing {}; run `{producer}` first", path.display());
    }
    Ok(())
}

#[derive(Serialize)]
struct FileRecord {
    path: String,
    sha256: String,
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    version: &'a str,
    args: Vec<String>,
    config: &'a PipelineConfig,
    inputs: Vec<FileRecord>,
    outputs: Vec<FileRecord>,
    wall_time_secs: f64,
}

/// Records one command's inputs and outputs, written on `finish`.
pub struct Run<'a> {
    command: &'a str,
    started: Instant,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
}

impl<'a> Run<'a> {
    pub fn start(command: &'a str) -> Self {
        Self {
            command,
            started: Instant::now(),
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn input(&mut self, path: impl Into<PathBuf>) {
        self.inputs.push(path.into());
    }

    pub fn output(&mut self, path: impl Into<PathBuf>) {
        self.outputs.push(path.into());
    }

    pub fn finish(self, work: &WorkDir, config: &PipelineConfig) -> Result<PathBuf> {
        let record = |paths: &[PathBuf]| -> Result<Vec<FileRecord>> {
            paths
                .iter()
                .map(|p| {
                    Ok(FileRecord {
                        path: p.display().to_string(),
                        sha256: file_sha256(p).with_context(|| format!("hashing {}", p.display()))?,
                    })
                })
                .collect()
        };
        let manifest = Manifest {
            command: self.command,
            version: env!("CARGO_PKG_VERSION"),
            args: std::env::args().skip(1).collect(),
            config,
            inputs: record(&self.inputs)?,
            outputs: record(&self.outputs)?,
            wall_time_secs: self.started.elapsed().as_secs_f64(),
        };
        let path = work.path(&format!("manifests/{}.json", self.command));
        write_json(&path, &manifest)?;
        Ok(path)
    }
}
