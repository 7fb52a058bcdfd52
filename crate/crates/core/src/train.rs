//! Stage-1 training of topology embeddings with a logistic loss over
//! one-to-one corrupted negatives.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{config_err, MkgError, Result};
use crate::graph::{MachineKnowledgeGraph, Triple};
use crate::kge::{
    accumulate_score_grad, corrupt_negative, init_embeddings, normalize_row, score_vectors,
    EmbeddingTable, ModelKind, CORRUPTION_RETRY_CAP,
};
use crate::linalg::{sigmoid, softplus, Matrix};
use crate::optim::{AdamConfig, RowAdam};
use crate::split::TripleSplit;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub model: ModelKind,
    pub dim: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub dropout: f64,
    pub negatives_per_positive: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            model: ModelKind::DistMult,
            dim: 100,
            learning_rate: 0.001,
            batch_size: 128,
            max_epochs: 100,
            dropout: 0.2,
            negatives_per_positive: 1,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(config_err("train.learning_rate must be a finite non-negative number"));
        }
        if self.batch_size == 0 {
            return Err(config_err("train.batch_size must be positive"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(config_err("train.dropout must lie in [0, 1)"));
        }
        if self.negatives_per_positive == 0 {
            return Err(config_err("train.negatives_per_positive must be positive"));
        }
        if self.dim == 0 {
            return Err(config_err("train.dim must be positive"));
        }
        Ok(())
    }
}

/// A positive triple with its corrupted negatives.
#[derive(Debug, Clone, PartialEq)]
pub struct Stage1Sample {
    pub positive: Triple,
    pub negatives: Vec<Triple>,
}

/// Gradient buffers shaped like an [`EmbeddingTable`], tracking touched rows.
#[derive(Debug, Clone)]
pub struct TableGrad {
    pub entities: Matrix,
    pub relations: Matrix,
    touched: Vec<usize>,
    mark: Vec<bool>,
}

impl TableGrad {
    pub fn new(table: &EmbeddingTable) -> Self {
        Self {
            entities: Matrix::zeros(table.entities.rows(), table.entities.cols()),
            relations: Matrix::zeros(table.relations.rows(), table.relations.cols()),
            touched: Vec::new(),
            mark: vec![false; table.entities.rows()],
        }
    }

    fn touch(&mut self, i: usize) {
        if !self.mark[i] {
            self.mark[i] = true;
            self.touched.push(i);
        }
    }

    pub fn touched(&self) -> &[usize] {
        &self.touched
    }

    pub fn clear(&mut self) {
        for &i in &self.touched {
            self.entities.row_mut(i).iter_mut().for_each(|x| *x = 0.0);
            self.mark[i] = false;
        }
        self.touched.clear();
        self.relations.as_mut_slice().iter_mut().for_each(|x| *x = 0.0);
    }
}

/// Mean over samples of `−ln σ(s⁺) − Σ ln(1 − σ(s⁻))`.
pub fn stage1_loss(table: &EmbeddingTable, samples: &[Stage1Sample]) -> f64 {
    batch_loss_grad::<ChaCha8Rng>(table, samples, None, None)
}

/// Same loss as [`stage1_loss`], accumulating its gradient into `grad`.
pub fn stage1_loss_grad(
    table: &EmbeddingTable,
    samples: &[Stage1Sample],
    grad: &mut TableGrad,
) -> f64 {
    batch_loss_grad::<ChaCha8Rng>(table, samples, None, Some(grad))
}

fn dropout_mask<R: Rng>(width: usize, p: f64, rng: &mut R) -> Vec<f64> {
    let keep = 1.0 / (1.0 - p);
    (0..width)
        .map(|_| if rng.random::<f64>() < p { 0.0 } else { keep })
        .collect()
}

fn batch_loss_grad<R: Rng>(
    table: &EmbeddingTable,
    samples: &[Stage1Sample],
    mut dropout: Option<(f64, &mut R)>,
    mut grad: Option<&mut TableGrad>,
) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    let kind = table.kind;
    let width = table.width();
    let scale = 1.0 / samples.len() as f64;
    let mut total = 0.0;
    let (mut gh, mut gr, mut gt) = (vec![0.0; width], vec![0.0; width], vec![0.0; width]);
    let mut h = vec![0.0; width];
    let mut t = vec![0.0; width];
    for sample in samples {
        let terms = std::iter::once((sample.positive, 1.0))
            .chain(sample.negatives.iter().map(|n| (*n, 0.0)));
        for (triple, label) in terms {
            let (mh, mt) = match dropout.as_mut() {
                Some((p, rng)) if *p > 0.0 => (
                    Some(dropout_mask(width, *p, *rng)),
                    Some(dropout_mask(width, *p, *rng)),
                ),
                _ => (None, None),
            };
            let hr = table.entities.row(triple.head);
            let tr = table.entities.row(triple.tail);
            for i in 0..width {
                h[i] = hr[i] * mh.as_ref().map_or(1.0, |m| m[i]);
                t[i] = tr[i] * mt.as_ref().map_or(1.0, |m| m[i]);
            }
            let r = table.relations.row(triple.relation.index());
            let s = score_vectors(kind, &h, r, &t);
            total += if label > 0.5 { softplus(-s) } else { softplus(s) };
            let Some(g) = grad.as_deref_mut() else {
                continue;
            };
            let upstream = (sigmoid(s) - label) * scale;
            gh.iter_mut().for_each(|x| *x = 0.0);
            gr.iter_mut().for_each(|x| *x = 0.0);
            gt.iter_mut().for_each(|x| *x = 0.0);
            accumulate_score_grad(kind, &h, r, &t, upstream, &mut gh, &mut gr, &mut gt);
            g.touch(triple.head);
            g.touch(triple.tail);
            let rel = g.relations.row_mut(triple.relation.index());
            rel.iter_mut().zip(&gr).for_each(|(a, b)| *a += b);
            let row = g.entities.row_mut(triple.head);
            for i in 0..width {
                row[i] += gh[i] * mh.as_ref().map_or(1.0, |m| m[i]);
            }
            let row = g.entities.row_mut(triple.tail);
            for i in 0..width {
                row[i] += gt[i] * mt.as_ref().map_or(1.0, |m| m[i]);
            }
        }
    }
    total * scale
}

#[derive(Debug, Clone)]
pub struct Stage1Result {
    pub table: EmbeddingTable,
    /// Mean batch loss per epoch.
    pub epoch_losses: Vec<f64>,
}

pub(crate) fn derive_seed(seed: u64, stream: u64) -> u64 {
    // splitmix64 finalizer over (seed, stream)
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Trains topology embeddings on the train split (all connectedTo triples
/// plus train similarTo triples). Negatives are filtered against train only.
pub fn train_stage1(
    graph: &MachineKnowledgeGraph,
    split: &TripleSplit,
    config: &TrainConfig,
) -> Result<Stage1Result> {
    config.validate()?;
    let train = split.train_triples(graph);
    if train.is_empty() {
        return Err(config_err("train split is empty"));
    }
    let n = graph.num_nodes();
    let mut table = init_embeddings(config.model, n, config.dim, derive_seed(config.seed, 1));
    let known: HashSet<Triple> = train.iter().copied().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, 2));
    let adam = AdamConfig::with_lr(config.learning_rate);
    let width = table.width();
    let mut ent_opt = RowAdam::new(adam, n, width);
    let mut rel_opt = RowAdam::new(adam, table.relations.rows(), width);
    let mut grad = TableGrad::new(&table);
    let all_relations: Vec<usize> = (0..table.relations.rows()).collect();

    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut epoch_losses = Vec::with_capacity(config.max_epochs);
    for epoch in 0..config.max_epochs {
        order.shuffle(&mut rng);
        let mut sum = 0.0;
        let mut batches = 0;
        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            let samples: Vec<Stage1Sample> = chunk
                .iter()
                .map(|&i| {
                    let positive = train[i];
                    let negatives = (0..config.negatives_per_positive)
                        .map(|_| corrupt_negative(&positive, n, &known, &mut rng, CORRUPTION_RETRY_CAP).0)
                        .collect();
                    Stage1Sample {
                        positive,
                        negatives,
                    }
                })
                .collect();
            grad.clear();
            let loss = batch_loss_grad(
                &table,
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
            let mut rows = grad.touched().to_vec();
            rows.sort_unstable();
            ent_opt.step_rows(&mut table.entities, &grad.entities, &rows, 0..width);
            rel_opt.step_rows(&mut table.relations, &grad.relations, &all_relations, 0..width);
            if config.model == ModelKind::TransE && config.learning_rate > 0.0 {
                for &r in &rows {
                    normalize_row(table.entities.row_mut(r));
                }
            }
            sum += loss;
            batches += 1;
        }
        let mean = sum / batches.max(1) as f64;
        log::debug!("stage1 epoch {epoch}: loss {mean:.5}");
        epoch_losses.push(mean);
    }
    if !table.entities.all_finite() || !table.relations.all_finite() {
        return Err(MkgError::Divergence {
            epoch: config.max_epochs,
            batch: 0,
            loss: f64::NAN,
        });
    }
    Ok(Stage1Result {
        table,
        epoch_losses,
    })
}
