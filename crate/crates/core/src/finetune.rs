//! Second-stage training of the fused embeddings and scorer on similarTo
//! triples, with early stopping on validation MRR.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ensemble::{finetune_batch, EnsembleGrad, EnsembleModel, FinetuneSample};
use crate::error::{config_err, MkgError, Result};
use crate::eval::{compute_metrics, rank_all, KnownTriples, RankOptions};
use crate::graph::MachineKnowledgeGraph;
use crate::negatives::{build_biased_candidates, sample_negatives, NegativeStrategy};
use crate::optim::{Adam, AdamConfig, RowAdam};
use crate::split::TripleSplit;
use crate::train::derive_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FinetuneConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    /// Dropout on the scorer's hidden layer.
    pub dropout: f64,
    /// Negatives per positive (K).
    pub negatives: usize,
    pub max_epochs: usize,
    /// Evaluations without improvement before stopping.
    pub patience: usize,
    /// Validate every this many epochs.
    pub eval_every: usize,
    pub hidden: usize,
    pub seed: u64,
    pub strategy: NegativeStrategy,
    /// Keep the topology block of each fused row fixed.
    pub freeze_topology: bool,
    /// Drop the scorer biases.
    pub paper_exact: bool,
}

impl Default for FinetuneConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.001,
            batch_size: 128,
            dropout: 0.2,
            negatives: 5,
            max_epochs: 100,
            patience: 5,
            eval_every: 1,
            hidden: 128,
            seed: 0,
            strategy: NegativeStrategy::Random,
            freeze_topology: false,
            paper_exact: false,
        }
    }
}

impl FinetuneConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(config_err("finetune.learning_rate must be a finite non-negative number"));
        }
        if self.batch_size == 0 {
            return Err(config_err("finetune.batch_size must be positive"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(config_err("finetune.dropout must lie in [0, 1)"));
        }
        if self.negatives == 0 {
            return Err(config_err("finetune.negatives must be at least 1"));
        }
        if self.eval_every == 0 {
            return Err(config_err("finetune.eval_every must be positive"));
        }
        if self.hidden == 0 {
            return Err(config_err("finetune.hidden must be positive"));
        }
        self.strategy.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    /// Epochs completed when the point was taken (0 = before training).
    pub epoch: usize,
    pub train_loss: Option<f64>,
    pub valid_mrr: f64,
}

#[derive(Debug, Clone)]
pub struct FinetuneResult {
    /// Parameters at the best validation point.
    pub model: EnsembleModel,
    pub best_epoch: usize,
    pub best_valid_mrr: f64,
    pub curve: Vec<CurvePoint>,
}

/// Filtered validation MRR over both directions, filtering against train
/// and validation triples.
pub fn validation_mrr(
    model: &EnsembleModel,
    graph: &MachineKnowledgeGraph,
    split: &TripleSplit,
) -> Result<f64> {
    let valid = split.valid_triples(graph);
    let known = KnownTriples::new(split.train_triples(graph).iter().chain(&valid));
    let ranks = rank_all(model, &valid, &known, &RankOptions::filtered())?;
    let all: Vec<f64> = ranks.iter().flat_map(|r| [r.tail_rank, r.head_rank]).collect();
    Ok(compute_metrics(&all)?.mrr)
}

pub fn finetune(
    graph: &MachineKnowledgeGraph,
    split: &TripleSplit,
    model: EnsembleModel,
    config: &FinetuneConfig,
) -> Result<FinetuneResult> {
    config.validate()?;
    if split.valid.is_empty() {
        return Err(config_err("fine-tuning needs validation similarTo triples"));
    }
    let positives = split.train_similar(graph);
    if positives.is_empty() {
        return Err(config_err("fine-tuning needs training similarTo triples"));
    }
    let train = split.train_triples(graph);
    let known = KnownTriples::new(&train);
    let candidates = match config.strategy {
        NegativeStrategy::Random => None,
        NegativeStrategy::BiasedJaccard { tau, same_machine } => {
            let c = build_biased_candidates(graph, &positives, tau, same_machine);
            log::info!("biased candidates: {:.1}% of anchors non-empty", 100.0 * c.coverage());
            Some(c)
        }
    };

    let mut model = model;
    if config.paper_exact {
        model.scorer.use_bias = false;
        model.scorer.b1.iter_mut().for_each(|b| *b = 0.0);
        model.scorer.b2 = 0.0;
    }
    let n = model.fused.entities.rows();
    let width = model.fused.width();
    let trainable = if config.freeze_topology {
        model.fused.topology_width..width
    } else {
        0..width
    };
    let adam = AdamConfig::with_lr(config.learning_rate);
    let mut ent_opt = RowAdam::new(adam, n, width);
    let mut rel_opt = RowAdam::new(adam, model.fused.relations.rows(), model.fused.relation_width());
    let mut w1_opt = Adam::new(adam, model.scorer.w1.as_slice().len());
    let mut b1_opt = Adam::new(adam, model.scorer.hidden());
    let mut w2_opt = Adam::new(adam, model.scorer.hidden());
    let mut b2_opt = Adam::new(adam, 1);
    let mut grad = EnsembleGrad::new(&model);
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, 3));

    let mut best_mrr = validation_mrr(&model, graph, split)?;
    let mut best_model = model.clone();
    let mut best_epoch = 0;
    let mut curve = vec![CurvePoint {
        epoch: 0,
        train_loss: None,
        valid_mrr: best_mrr,
    }];
    let mut stale = 0;
    let mut order: Vec<usize> = (0..positives.len()).collect();
    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut rng);
        let (mut sum, mut batches) = (0.0, 0usize);
        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            let samples: Vec<FinetuneSample> = chunk
                .iter()
                .map(|&i| FinetuneSample {
                    positive: positives[i],
                    negative_tails: sample_negatives(
                        &positives[i],
                        config.negatives,
                        n,
                        candidates.as_ref(),
                        &known,
                        &mut rng,
                    ),
                })
                .collect();
            grad.clear();
            let loss = finetune_batch(
                &model,
                &samples,
                Some((config.dropout, &mut rng)),
                Some(&mut grad),
            );
            if !loss.is_finite() {
                return Err(MkgError::Divergence {
                    epoch,
                    batch: b,
                    loss,
                });
            }
            let mut rows = grad.touched_entities().to_vec();
            rows.sort_unstable();
            ent_opt.step_rows(&mut model.fused.entities, &grad.entities, &rows, trainable.clone());
            if !config.freeze_topology {
                let rels = grad.touched_relations();
                let w = model.fused.relation_width();
                rel_opt.step_rows(&mut model.fused.relations, &grad.relations, &rels, 0..w);
            }
            w1_opt.step(model.scorer.w1.as_mut_slice(), grad.w1.as_slice());
            w2_opt.step(&mut model.scorer.w2, &grad.w2);
            if model.scorer.use_bias {
                b1_opt.step(&mut model.scorer.b1, &grad.b1);
                let mut b2 = [model.scorer.b2];
                b2_opt.step(&mut b2, &[grad.b2]);
                model.scorer.b2 = b2[0];
            }
            sum += loss;
            batches += 1;
        }
        let train_loss = sum / batches.max(1) as f64;
        if epoch % config.eval_every != 0 && epoch != config.max_epochs {
            continue;
        }
        let mrr = validation_mrr(&model, graph, split)?;
        log::debug!("finetune epoch {epoch}: loss {train_loss:.5}, valid MRR {mrr:.4}");
        curve.push(CurvePoint {
            epoch,
            train_loss: Some(train_loss),
            valid_mrr: mrr,
        });
        if mrr > best_mrr {
            best_mrr = mrr;
            best_model = model.clone();
            best_epoch = epoch;
            stale = 0;
        } else {
            stale += 1;
            if stale >= config.patience {
                log::info!("early stop at epoch {epoch}, best {best_mrr:.4} at {best_epoch}");
                break;
            }
        }
    }
    Ok(FinetuneResult {
        model: best_model,
        best_epoch,
        best_valid_mrr: best_mrr,
        curve,
    })
}
