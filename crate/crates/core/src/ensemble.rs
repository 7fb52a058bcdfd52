//! Fused topology + feature embeddings and the two-layer triple scorer
//! `g(u, e, v) = σ(W2 · relu(W1 · [z_u ⊙ z_v ; z_e] + b1) + b2)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{MkgError, Result};
use crate::eval::TripleScorer;
use crate::graph::{RelationKind, Triple};
use crate::kge::EmbeddingTable;
use crate::linalg::{dot, sigmoid, softplus, Matrix};

/// Per-node `[topology ; projected features]` rows plus relation rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusedEmbeddingTable {
    pub topology_width: usize,
    pub feature_width: usize,
    pub entities: Matrix,
    pub relations: Matrix,
}

impl FusedEmbeddingTable {
    pub fn width(&self) -> usize {
        self.topology_width + self.feature_width
    }

    pub fn relation_width(&self) -> usize {
        self.relations.cols()
    }

    /// Input width of the scorer: fused width plus relation width.
    pub fn scorer_input_width(&self) -> usize {
        self.width() + self.relation_width()
    }
}

pub fn fuse_embeddings(topology: &EmbeddingTable, features: &Matrix) -> Result<FusedEmbeddingTable> {
    if topology.entities.rows() != features.rows() {
        return Err(MkgError::Shape(format!(
            "topology has {} rows, features have {}",
            topology.entities.rows(),
            features.rows()
        )));
    }
    Ok(FusedEmbeddingTable {
        topology_width: topology.entities.cols(),
        feature_width: features.cols(),
        entities: topology.entities.hstack(features)?,
        relations: topology.relations.clone(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScorerParams {
    /// `hidden × input`.
    pub w1: Matrix,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: f64,
    /// When false the biases stay at zero and are never trained.
    pub use_bias: bool,
}

impl ScorerParams {
    /// Uniform `±1/√fan_in` initialization for weights and biases.
    pub fn init(input: usize, hidden: usize, use_bias: bool, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b_in = 1.0 / (input as f64).sqrt();
        let b_hid = 1.0 / (hidden as f64).sqrt();
        let w1 = Matrix::from_vec(
            hidden,
            input,
            (0..hidden * input).map(|_| rng.random_range(-b_in..b_in)).collect(),
        )
        .expect("sized by construction");
        let mut b1: Vec<f64> = (0..hidden).map(|_| rng.random_range(-b_in..b_in)).collect();
        let w2 = (0..hidden).map(|_| rng.random_range(-b_hid..b_hid)).collect();
        let mut b2 = rng.random_range(-b_hid..b_hid);
        if !use_bias {
            b1.iter_mut().for_each(|b| *b = 0.0);
            b2 = 0.0;
        }
        Self {
            w1,
            b1,
            w2,
            b2,
            use_bias,
        }
    }

    pub fn zeros(input: usize, hidden: usize) -> Self {
        Self {
            w1: Matrix::zeros(hidden, input),
            b1: vec![0.0; hidden],
            w2: vec![0.0; hidden],
            b2: 0.0,
            use_bias: true,
        }
    }

    pub fn hidden(&self) -> usize {
        self.w1.rows()
    }

    pub fn input(&self) -> usize {
        self.w1.cols()
    }

    pub fn all_finite(&self) -> bool {
        self.w1.all_finite()
            && self.b1.iter().chain(&self.w2).all(|v| v.is_finite())
            && self.b2.is_finite()
    }
}

/// Pre-squash logit of `g`.
pub fn score_logit(params: &ScorerParams, zu: &[f64], ze: &[f64], zv: &[f64]) -> Result<f64> {
    if zu.len() != zv.len() || zu.len() + ze.len() != params.input() {
        return Err(MkgError::Shape(format!(
            "scorer expects input width {}, got node widths {}/{} and relation width {}",
            params.input(),
            zu.len(),
            zv.len(),
            ze.len()
        )));
    }
    let f = zu.len();
    let mut s = params.b2;
    for j in 0..params.hidden() {
        let w = params.w1.row(j);
        let mut pre = params.b1[j];
        for i in 0..f {
            pre += w[i] * (zu[i] * zv[i]);
        }
        pre += dot(&w[f..], ze);
        if pre > 0.0 {
            s += params.w2[j] * pre;
        }
    }
    Ok(s)
}

/// `g(u, e, v) ∈ (0, 1)`.
pub fn score_g(params: &ScorerParams, zu: &[f64], ze: &[f64], zv: &[f64]) -> Result<f64> {
    score_logit(params, zu, ze, zv).map(sigmoid)
}

/// Fused embeddings together with the scorer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleModel {
    pub fused: FusedEmbeddingTable,
    pub scorer: ScorerParams,
}

impl EnsembleModel {
    pub fn new(fused: FusedEmbeddingTable, scorer: ScorerParams) -> Result<Self> {
        if fused.scorer_input_width() != scorer.input() {
            return Err(MkgError::Shape(format!(
                "fused input width {} does not match scorer input {}",
                fused.scorer_input_width(),
                scorer.input()
            )));
        }
        Ok(Self { fused, scorer })
    }

    pub fn logit(&self, t: &Triple) -> f64 {
        score_logit(
            &self.scorer,
            self.fused.entities.row(t.head),
            self.fused.relations.row(t.relation.index()),
            self.fused.entities.row(t.tail),
        )
        .expect("shapes validated at construction")
    }

    /// Logits of `(anchor, relation, c)` for all `c`; `g` is symmetric in
    /// its two node arguments so this serves both directions.
    fn logits_against(&self, anchor: usize, relation: RelationKind) -> Vec<f64> {
        let f = self.fused.width();
        let za = self.fused.entities.row(anchor);
        let ze = self.fused.relations.row(relation.index());
        let hidden = self.scorer.hidden();
        let mut scaled = Matrix::zeros(hidden, f);
        let mut offset = vec![0.0; hidden];
        for j in 0..hidden {
            let w = self.scorer.w1.row(j);
            let out = scaled.row_mut(j);
            for i in 0..f {
                out[i] = w[i] * za[i];
            }
            offset[j] = self.scorer.b1[j] + dot(&w[f..], ze);
        }
        let pre = self
            .fused
            .entities
            .matmul_t(&scaled)
            .expect("shapes validated at construction");
        (0..pre.rows())
            .map(|c| {
                let row = pre.row(c);
                let mut s = self.scorer.b2;
                for j in 0..hidden {
                    let h = row[j] + offset[j];
                    if h > 0.0 {
                        s += self.scorer.w2[j] * h;
                    }
                }
                s
            })
            .collect()
    }
}

impl TripleScorer for EnsembleModel {
    fn num_entities(&self) -> usize {
        self.fused.entities.rows()
    }

    fn score_tails(&self, head: usize, relation: RelationKind) -> Vec<f64> {
        self.logits_against(head, relation)
    }

    fn score_heads(&self, relation: RelationKind, tail: usize) -> Vec<f64> {
        self.logits_against(tail, relation)
    }
}

/// A positive similarTo triple and the tails drawn as its negatives.
#[derive(Debug, Clone, PartialEq)]
pub struct FinetuneSample {
    pub positive: Triple,
    pub negative_tails: Vec<usize>,
}

/// Gradient buffers for every trainable parameter group.
#[derive(Debug, Clone)]
pub struct EnsembleGrad {
    pub entities: Matrix,
    pub relations: Matrix,
    pub w1: Matrix,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: f64,
    touched: Vec<usize>,
    mark: Vec<bool>,
    rel_touched: [bool; 2],
}

impl EnsembleGrad {
    pub fn new(model: &EnsembleModel) -> Self {
        let fused = &model.fused;
        Self {
            entities: Matrix::zeros(fused.entities.rows(), fused.entities.cols()),
            relations: Matrix::zeros(fused.relations.rows(), fused.relations.cols()),
            w1: Matrix::zeros(model.scorer.hidden(), model.scorer.input()),
            b1: vec![0.0; model.scorer.hidden()],
            w2: vec![0.0; model.scorer.hidden()],
            b2: 0.0,
            touched: Vec::new(),
            mark: vec![false; fused.entities.rows()],
            rel_touched: [false; 2],
        }
    }

    pub fn touched_entities(&self) -> &[usize] {
        &self.touched
    }

    pub fn touched_relations(&self) -> Vec<usize> {
        (0..2).filter(|&r| self.rel_touched[r]).collect()
    }

    fn touch(&mut self, i: usize) {
        if !self.mark[i] {
            self.mark[i] = true;
            self.touched.push(i);
        }
    }

    pub fn clear(&mut self) {
        for &i in &self.touched {
            self.entities.row_mut(i).iter_mut().for_each(|x| *x = 0.0);
            self.mark[i] = false;
        }
        self.touched.clear();
        self.relations.as_mut_slice().iter_mut().for_each(|x| *x = 0.0);
        self.rel_touched = [false; 2];
        self.w1.as_mut_slice().iter_mut().for_each(|x| *x = 0.0);
        self.b1.iter_mut().for_each(|x| *x = 0.0);
        self.w2.iter_mut().for_each(|x| *x = 0.0);
        self.b2 = 0.0;
    }
}

/// Mean over samples of `−ln g(u,e,v) − Σᵢ ln(1 − g(u,e,nᵢ))`.
pub fn finetune_loss(model: &EnsembleModel, samples: &[FinetuneSample]) -> f64 {
    finetune_batch::<ChaCha8Rng>(model, samples, None, None)
}

/// [`finetune_loss`] plus its gradient with respect to every parameter group.
pub fn finetune_loss_grad(
    model: &EnsembleModel,
    samples: &[FinetuneSample],
    grad: &mut EnsembleGrad,
) -> f64 {
    finetune_batch::<ChaCha8Rng>(model, samples, None, Some(grad))
}

pub(crate) fn finetune_batch<R: Rng>(
    model: &EnsembleModel,
    samples: &[FinetuneSample],
    mut dropout: Option<(f64, &mut R)>,
    mut grad: Option<&mut EnsembleGrad>,
) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    let p = &model.scorer;
    let fused = &model.fused;
    let f = fused.width();
    let input = p.input();
    let hidden = p.hidden();
    let scale = 1.0 / samples.len() as f64;
    let mut x = vec![0.0; input];
    let mut pre = vec![0.0; hidden];
    let mut h = vec![0.0; hidden];
    let mut mask = vec![1.0; hidden];
    let mut dpre = vec![0.0; hidden];
    let mut dx = vec![0.0; input];
    let mut total = 0.0;
    for sample in samples {
        let pos = sample.positive;
        let terms = std::iter::once((pos.tail, 1.0))
            .chain(sample.negative_tails.iter().map(|&n| (n, 0.0)));
        for (tail, label) in terms {
            let zu = fused.entities.row(pos.head);
            let zv = fused.entities.row(tail);
            let ze = fused.relations.row(pos.relation.index());
            for i in 0..f {
                x[i] = zu[i] * zv[i];
            }
            x[f..].copy_from_slice(ze);
            match dropout.as_mut() {
                Some((rate, rng)) if *rate > 0.0 => {
                    let keep = 1.0 / (1.0 - *rate);
                    for m in mask.iter_mut() {
                        *m = if rng.random::<f64>() < *rate { 0.0 } else { keep };
                    }
                }
                _ => mask.iter_mut().for_each(|m| *m = 1.0),
            }
            let mut s = p.b2;
            for j in 0..hidden {
                pre[j] = p.b1[j] + dot(p.w1.row(j), &x);
                h[j] = if pre[j] > 0.0 { pre[j] * mask[j] } else { 0.0 };
                s += p.w2[j] * h[j];
            }
            total += if label > 0.5 { softplus(-s) } else { softplus(s) };
            let Some(g) = grad.as_deref_mut() else {
                continue;
            };
            let ds = (sigmoid(s) - label) * scale;
            if p.use_bias {
                g.b2 += ds;
            }
            for j in 0..hidden {
                g.w2[j] += ds * h[j];
                dpre[j] = if pre[j] > 0.0 { ds * p.w2[j] * mask[j] } else { 0.0 };
            }
            dx.iter_mut().for_each(|v| *v = 0.0);
            for j in 0..hidden {
                let d = dpre[j];
                if d == 0.0 {
                    continue;
                }
                if p.use_bias {
                    g.b1[j] += d;
                }
                let gw = g.w1.row_mut(j);
                let w = p.w1.row(j);
                for i in 0..input {
                    gw[i] += d * x[i];
                    dx[i] += d * w[i];
                }
            }
            g.touch(pos.head);
            g.touch(tail);
            g.rel_touched[pos.relation.index()] = true;
            for i in 0..f {
                let (a, b) = (zu[i], zv[i]);
                g.entities[(pos.head, i)] += dx[i] * b;
                g.entities[(tail, i)] += dx[i] * a;
            }
            let gr = g.relations.row_mut(pos.relation.index());
            for (i, v) in gr.iter_mut().enumerate() {
                *v += dx[f + i];
            }
        }
    }
    total * scale
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kge::{init_embeddings, ModelKind};

    #[test]
    fn fuse_widths() {
        let topo = init_embeddings(ModelKind::DistMult, 4, 100, 0);
        let feats = Matrix::zeros(4, 100);
        let fused = fuse_embeddings(&topo, &feats).unwrap();
        assert_eq!(fused.width(), 200);
        assert_eq!(fused.scorer_input_width(), 300);
        assert!(fused.entities.row(2)[100..].iter().all(|&v| v == 0.0));
        assert!(matches!(
            fuse_embeddings(&topo, &Matrix::zeros(3, 100)),
            Err(MkgError::Shape(_))
        ));
    }

    #[test]
    fn zero_scorer_is_half() {
        let p = ScorerParams::zeros(6, 4);
        let s = score_g(&p, &[1.0, 2.0, 3.0, 4.0], &[0.5, 0.5], &[1.0, 1.0, 1.0, 1.0]).unwrap();
        assert_eq!(s, 0.5);
        assert!(matches!(
            score_g(&p, &[1.0], &[0.5], &[1.0, 2.0]),
            Err(MkgError::Shape(_))
        ));
    }

    #[test]
    fn batched_logits_match_pointwise() {
        let topo = init_embeddings(ModelKind::ComplEx, 9, 5, 4);
        let feats = Matrix::from_vec(9, 3, (0..27).map(|i| (i as f64 * 0.37).sin()).collect()).unwrap();
        let fused = fuse_embeddings(&topo, &feats).unwrap();
        let scorer = ScorerParams::init(fused.scorer_input_width(), 7, true, 2);
        let model = EnsembleModel::new(fused, scorer).unwrap();
        let tails = model.score_tails(3, RelationKind::SimilarTo);
        for (c, &s) in tails.iter().enumerate() {
            let t = Triple::new(3, RelationKind::SimilarTo, c);
            assert!((s - model.logit(&t)).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_scorer_loss_is_k_plus_one_ln2() {
        let topo = init_embeddings(ModelKind::DistMult, 8, 4, 0);
        let fused = fuse_embeddings(&topo, &Matrix::zeros(8, 2)).unwrap();
        let model = EnsembleModel::new(fused.clone(), ScorerParams::zeros(fused.scorer_input_width(), 3)).unwrap();
        let sample = FinetuneSample {
            positive: Triple::new(0, RelationKind::SimilarTo, 1),
            negative_tails: vec![2, 3, 4, 5, 6],
        };
        let loss = finetune_loss(&model, &[sample]);
        assert!((loss - 6.0 * 2f64.ln()).abs() < 1e-12);
        assert!((loss - 4.159).abs() < 5e-4);
    }
}
