//! End-to-end replica: feature embedding, stage-1 topology training,
//! fusion, fine-tuning and filtered test ranking.

use serde::{Deserialize, Serialize};

use crate::ensemble::{fuse_embeddings, EnsembleModel, ScorerParams};
use crate::error::Result;
use crate::eval::{evaluate, KnownTriples, RankOptions, RankingReport, RunInfo, TripleScorer};
use crate::features::{build_vocabulary, encode, AttributeVocabulary};
use crate::finetune::{finetune, FinetuneConfig, FinetuneResult};
use crate::graph::MachineKnowledgeGraph;
use crate::kge::EmbeddingTable;
use crate::linalg::Matrix;
use crate::negatives::NegativeStrategy;
use crate::pca::{fit_pca, project, ProjectionModel};
use crate::split::{split_similar_edges, TripleSplit, DEFAULT_RATIOS};
use crate::train::{derive_seed, train_stage1, TrainConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub split_ratios: [f64; 3],
    /// Fixed across replicas so every seed sees the same test triples.
    pub split_seed: u64,
    pub min_freq: usize,
    pub pca_dim: usize,
    pub train: TrainConfig,
    pub finetune: FinetuneConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            split_ratios: DEFAULT_RATIOS,
            split_seed: 0,
            min_freq: 2,
            pca_dim: 100,
            train: TrainConfig::default(),
            finetune: FinetuneConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        self.finetune.validate()
    }

    pub fn split(&self, graph: &MachineKnowledgeGraph) -> Result<TripleSplit> {
        split_similar_edges(graph, self.split_ratios, self.split_seed)
    }
}

/// Metadata features projected onto their principal components.
#[derive(Debug, Clone)]
pub struct FeatureEmbedding {
    pub vocabulary: AttributeVocabulary,
    pub projection: ProjectionModel,
    pub embeddings: Matrix,
}

pub fn embed_features(graph: &MachineKnowledgeGraph, min_freq: usize, dim: usize) -> Result<FeatureEmbedding> {
    let vocabulary = build_vocabulary(graph.nodes(), min_freq);
    let raw = encode(graph.nodes(), &vocabulary);
    let projection = fit_pca(&raw, dim)?;
    let embeddings = project(&raw, &projection)?;
    Ok(FeatureEmbedding {
        vocabulary,
        projection,
        embeddings,
    })
}

/// Filtered test ranking against every known triple.
pub fn evaluate_test<S: TripleScorer + ?Sized>(
    scorer: &S,
    graph: &MachineKnowledgeGraph,
    split: &TripleSplit,
    run: RunInfo,
) -> Result<RankingReport> {
    let known = KnownTriples::new(graph.triples());
    evaluate(scorer, &split.test_triples(graph), &known, &RankOptions::filtered(), run)
}

/// Fuses topology and feature rows and attaches a freshly initialized scorer.
pub fn init_ensemble(
    topology: &EmbeddingTable,
    features: &Matrix,
    config: &FinetuneConfig,
) -> Result<EnsembleModel> {
    let fused = fuse_embeddings(topology, features)?;
    let scorer = ScorerParams::init(
        fused.scorer_input_width(),
        config.hidden,
        !config.paper_exact,
        derive_seed(config.seed, 4),
    );
    EnsembleModel::new(fused, scorer)
}

#[derive(Debug, Clone)]
pub struct EnsembleOutcome {
    pub strategy: NegativeStrategy,
    pub finetune: FinetuneResult,
    pub test: RankingReport,
}

#[derive(Debug, Clone)]
pub struct ReplicaOutcome {
    pub seed: u64,
    pub topology: EmbeddingTable,
    pub stage1_losses: Vec<f64>,
    /// Topology embeddings ranked on their own.
    pub topology_test: RankingReport,
    pub ensembles: Vec<EnsembleOutcome>,
}

/// One seed: stage-1 training once, then one fine-tune per strategy.
pub fn run_replica(
    graph: &MachineKnowledgeGraph,
    split: &TripleSplit,
    features: &Matrix,
    config: &ExperimentConfig,
    seed: u64,
    strategies: &[NegativeStrategy],
) -> Result<ReplicaOutcome> {
    config.validate()?;
    let train_cfg = TrainConfig {
        seed,
        ..config.train.clone()
    };
    let stage1 = train_stage1(graph, split, &train_cfg)?;
    let model_name = train_cfg.model.name().to_string();
    let topology_test = evaluate_test(
        &stage1.table,
        graph,
        split,
        RunInfo {
            model: model_name.clone(),
            strategy: "topology".into(),
            seed,
        },
    )?;
    let mut ensembles = Vec::with_capacity(strategies.len());
    for &strategy in strategies {
        let ft_cfg = FinetuneConfig {
            seed,
            strategy,
            ..config.finetune.clone()
        };
        let model = init_ensemble(&stage1.table, features, &ft_cfg)?;
        let result = finetune(graph, split, model, &ft_cfg)?;
        let test = evaluate_test(
            &result.model,
            graph,
            split,
            RunInfo {
                model: format!("{model_name}-ensemble"),
                strategy: strategy.name().into(),
                seed,
            },
        )?;
        ensembles.push(EnsembleOutcome {
            strategy,
            finetune: result,
            test,
        });
    }
    Ok(ReplicaOutcome {
        seed,
        topology: stage1.table,
        stage1_losses: stage1.epoch_losses,
        topology_test,
        ensembles,
    })
}
