//! Check runners that drive the library against the oracles in the parent
//! module and report the worst deviation seen.

use super::*;
use mkg_core::ensemble::{
    finetune_loss, finetune_loss_grad, EnsembleGrad, EnsembleModel, FinetuneSample, FusedEmbeddingTable, ScorerParams,
};
use mkg_core::eval::{rank_triple, KnownTriples, RankOptions, TripleScorer};
use mkg_core::kge::{init_embeddings, score_vectors, ModelKind};
use mkg_core::linalg::Matrix;
use mkg_core::pca::{fit_pca, project};
use mkg_core::train::{stage1_loss, stage1_loss_grad, Stage1Sample, TableGrad};
use mkg_core::{RelationKind, Triple};
use rand::Rng;

pub const FD_EPS: f64 = 1e-5;

/// Worst relative error of the three score functions over `cases` random
/// 5-dimensional inputs.
pub fn score_oracle_worst(seed: u64, cases: usize) -> f64 {
    let mut r = rng(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..cases {
        let d = 5;
        let (h, rel, t) = (uniform_vec(&mut r, d, 2.0), uniform_vec(&mut r, d, 2.0), uniform_vec(&mut r, d, 2.0));
        worst = worst.max(rel_err(score_vectors(ModelKind::TransE, &h, &rel, &t), transe_oracle(&h, &rel, &t)));
        worst = worst.max(rel_err(score_vectors(ModelKind::DistMult, &h, &rel, &t), distmult_oracle(&h, &rel, &t)));
        let (h, rel, t) = (uniform_vec(&mut r, 2 * d, 2.0), uniform_vec(&mut r, 2 * d, 2.0), uniform_vec(&mut r, 2 * d, 2.0));
        worst = worst.max(rel_err(score_vectors(ModelKind::ComplEx, &h, &rel, &t), complex_oracle(&h, &rel, &t)));
    }
    worst
}

/// Relative error with a floor so that two near-zero derivatives compare
/// as equal.
pub fn grad_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

fn central<F: FnMut(f64) -> f64>(x: f64, mut f: F) -> f64 {
    (f(x + FD_EPS) - f(x - FD_EPS)) / (2.0 * FD_EPS)
}

pub fn random_triple(r: &mut impl Rng, n: usize) -> Triple {
    let h = r.random_range(0..n);
    let mut t = r.random_range(0..n);
    while t == h {
        t = r.random_range(0..n);
    }
    let rel = if r.random_bool(0.5) { RelationKind::ConnectedTo } else { RelationKind::SimilarTo };
    Triple::new(h, rel, t)
}

/// Worst stage-1 gradient error over `configs` random tables and batches.
pub fn stage1_fd_worst(seed: u64, configs: usize) -> f64 {
    let mut r = rng(seed);
    let mut worst: f64 = 0.0;
    for config in 0..configs {
        let kind = ModelKind::ALL[config % 3];
        let n = r.random_range(3..8);
        let dim = r.random_range(2..6);
        // Unit-scale entries keep the loss O(1), so difference quotients are
        // not dominated by rounding of a large saturated loss.
        let mut table = init_embeddings(kind, n, dim, config as u64);
        for x in table.entities.as_mut_slice().iter_mut().chain(table.relations.as_mut_slice()) {
            *x = r.random_range(-1.0..1.0);
        }
        let samples: Vec<Stage1Sample> = (0..r.random_range(1..4))
            .map(|_| Stage1Sample {
                positive: random_triple(&mut r, n),
                negatives: (0..r.random_range(1..3)).map(|_| random_triple(&mut r, n)).collect(),
            })
            .collect();
        let mut grad = TableGrad::new(&table);
        stage1_loss_grad(&table, &samples, &mut grad);
        for i in 0..table.entities.rows() {
            for j in 0..table.entities.cols() {
                let x = table.entities[(i, j)];
                let num = central(x, |v| {
                    table.entities[(i, j)] = v;
                    stage1_loss(&table, &samples)
                });
                table.entities[(i, j)] = x;
                worst = worst.max(grad_err(grad.entities[(i, j)], num));
            }
        }
        for i in 0..table.relations.rows() {
            for j in 0..table.relations.cols() {
                let x = table.relations[(i, j)];
                let num = central(x, |v| {
                    table.relations[(i, j)] = v;
                    stage1_loss(&table, &samples)
                });
                table.relations[(i, j)] = x;
                worst = worst.max(grad_err(grad.relations[(i, j)], num));
            }
        }
    }
    worst
}

/// Random ensemble whose hidden pre-activations all stay clear of the
/// rectifier kink, where the derivative does not exist.
fn smooth_ensemble(r: &mut impl Rng, samples: &[FinetuneSample], n: usize) -> EnsembleModel {
    loop {
        let (topo, feat, rel, hidden) = (3, 2, 2, 4);
        let width = topo + feat;
        let fused = FusedEmbeddingTable {
            topology_width: topo,
            feature_width: feat,
            entities: Matrix::from_vec(n, width, uniform_vec(r, n * width, 1.0)).unwrap(),
            relations: Matrix::from_vec(2, rel, uniform_vec(r, 2 * rel, 1.0)).unwrap(),
        };
        let input = width + rel;
        let scorer = ScorerParams {
            w1: Matrix::from_vec(hidden, input, uniform_vec(r, hidden * input, 1.0)).unwrap(),
            b1: uniform_vec(r, hidden, 0.5),
            w2: uniform_vec(r, hidden, 1.0),
            b2: r.random_range(-0.5..0.5),
            use_bias: true,
        };
        let model = EnsembleModel::new(fused, scorer).unwrap();
        let w1 = model.scorer.w1.to_rows();
        let clear = samples.iter().all(|s| {
            let e = model.fused.relations.row(s.positive.relation.index());
            let u = model.fused.entities.row(s.positive.head);
            std::iter::once(s.positive.tail).chain(s.negative_tails.iter().copied()).all(|v| {
                let v = model.fused.entities.row(v);
                let mut x: Vec<f64> = u.iter().zip(v).map(|(a, b)| a * b).collect();
                x.extend_from_slice(e);
                (0..w1.len()).all(|j| {
                    let pre: f64 = model.scorer.b1[j] + w1[j].iter().zip(&x).map(|(a, b)| a * b).sum::<f64>();
                    pre.abs() > 1e-3
                })
            })
        });
        if clear {
            return model;
        }
    }
}

pub const FINETUNE_PARAMS: [&str; 6] = ["W1", "b1", "W2", "b2", "entities", "relations"];

/// Worst fine-tune gradient error per parameter group (see
/// [`FINETUNE_PARAMS`]) over `configs` random models and batches.
pub fn finetune_fd_worst(seed: u64, configs: usize) -> [f64; 6] {
    let mut r = rng(seed);
    let mut worst = [0.0f64; 6];
    for _ in 0..configs {
        let n = r.random_range(4..8);
        let samples: Vec<FinetuneSample> = (0..r.random_range(1..4))
            .map(|_| {
                let mut p = random_triple(&mut r, n);
                p.relation = RelationKind::SimilarTo;
                FinetuneSample {
                    positive: p,
                    negative_tails: (0..r.random_range(1..4)).map(|_| r.random_range(0..n)).collect(),
                }
            })
            .collect();
        let mut m = smooth_ensemble(&mut r, &samples, n);
        let mut g = EnsembleGrad::new(&m);
        finetune_loss_grad(&m, &samples, &mut g);

        macro_rules! check {
            ($slot:expr, $field:expr, $analytic:expr) => {{
                let x = $field;
                let num = central(x, |v| {
                    $field = v;
                    finetune_loss(&m, &samples)
                });
                $field = x;
                worst[$slot] = worst[$slot].max(grad_err($analytic, num));
            }};
        }
        for j in 0..m.scorer.w1.rows() {
            for k in 0..m.scorer.w1.cols() {
                check!(0, m.scorer.w1[(j, k)], g.w1[(j, k)]);
            }
            check!(1, m.scorer.b1[j], g.b1[j]);
            check!(2, m.scorer.w2[j], g.w2[j]);
        }
        check!(3, m.scorer.b2, g.b2);
        for i in 0..n {
            for k in 0..m.fused.entities.cols() {
                check!(4, m.fused.entities[(i, k)], g.entities[(i, k)]);
            }
        }
        for i in 0..2 {
            for k in 0..m.fused.relations.cols() {
                check!(5, m.fused.relations[(i, k)], g.relations[(i, k)]);
            }
        }
    }
    worst
}

/// Exact rank-5 data: 200 rows in 40 dimensions with distinct spectrum and
/// a nonzero mean.
pub fn rank_five_data(seed: u64) -> Matrix {
    let mut r = rng(seed);
    let basis = Matrix::from_vec(5, 40, uniform_vec(&mut r, 200, 1.0)).unwrap();
    let coef = Matrix::from_vec(200, 5, (0..1000).map(|i| r.random_range(-1.0..1.0) * (5 - i % 5) as f64).collect()).unwrap();
    let mut data = coef.matmul(&basis).unwrap();
    data.as_mut_slice().iter_mut().enumerate().for_each(|(i, x)| *x += (i % 40) as f64);
    data
}

/// Largest absolute deviation of the fitted variances, variance ratios and
/// projected scores from a Jacobi decomposition, scores compared up to sign.
pub fn pca_oracle_deviation(data: &Matrix, d: usize) -> f64 {
    let rows = data.to_rows();
    let (mean, cov) = covariance(&rows);
    let (vals, vecs) = jacobi_eigen(&cov);
    let model = fit_pca(data, d).unwrap();
    let proj = project(data, &model).unwrap();
    let total: f64 = vals.iter().map(|v| v.max(0.0)).sum();
    let mut worst: f64 = 0.0;
    for c in 0..d {
        worst = worst.max((model.explained_variance[c] - vals[c]).abs());
        worst = worst.max((model.explained_variance_ratio[c] - vals[c] / total).abs());
        let oracle: Vec<f64> = rows
            .iter()
            .map(|r| (0..r.len()).map(|j| (r[j] - mean[j]) * vecs[j][c]).sum())
            .collect();
        let sign = if oracle.iter().zip(0..).map(|(o, i)| o * proj[(i, c)]).sum::<f64>() < 0.0 { -1.0 } else { 1.0 };
        for (i, o) in oracle.iter().enumerate() {
            worst = worst.max((proj[(i, c)] - sign * o).abs());
        }
    }
    worst
}

/// Scores stored per query: `tails[h]` and `heads[t]` over all entities.
pub struct TableScorer {
    pub tails: Vec<Vec<f64>>,
    pub heads: Vec<Vec<f64>>,
}

impl TripleScorer for TableScorer {
    fn num_entities(&self) -> usize {
        self.tails.len()
    }
    fn score_tails(&self, head: usize, _: RelationKind) -> Vec<f64> {
        self.tails[head].clone()
    }
    fn score_heads(&self, _: RelationKind, tail: usize) -> Vec<f64> {
        self.heads[tail].clone()
    }
}

/// Runs `cases` random 50-candidate instances through filtered ranking and
/// counts disagreements with the sort oracle. Also counts cases where the
/// filtered rank exceeds the raw rank.
pub fn filtered_rank_mismatches(seed: u64, cases: usize) -> (usize, usize) {
    let mut r = rng(seed);
    let n = 50;
    let (mut mismatches, mut worse) = (0, 0);
    for case in 0..cases {
        // coarse scores so that ties actually occur
        let coarse = case % 2 == 0;
        let draw = |r: &mut rand_chacha::ChaCha8Rng| -> Vec<f64> {
            (0..n).map(|_| if coarse { r.random_range(0..8) as f64 } else { r.random::<f64>() }).collect()
        };
        let scorer = TableScorer {
            tails: (0..n).map(|_| draw(&mut r)).collect(),
            heads: (0..n).map(|_| draw(&mut r)).collect(),
        };
        let h = r.random_range(0..n);
        let mut t = r.random_range(0..n);
        while t == h {
            t = r.random_range(0..n);
        }
        let target = Triple::new(h, RelationKind::SimilarTo, t);
        let mut known_list = vec![target];
        for _ in 0..r.random_range(0..6) {
            known_list.push(Triple::new(h, RelationKind::SimilarTo, r.random_range(0..n)));
            known_list.push(Triple::new(r.random_range(0..n), RelationKind::SimilarTo, t));
        }
        let known = KnownTriples::new(&known_list);
        let got = rank_triple(&scorer, &target, &known, &RankOptions::filtered()).unwrap();
        let raw = rank_triple(&scorer, &target, &known, &RankOptions::default()).unwrap();

        let keep_tail: Vec<bool> = (0..n)
            .map(|c| c != h && !known_list.iter().any(|k| k.head == h && k.tail == c && c != t))
            .collect();
        let keep_head: Vec<bool> = (0..n)
            .map(|c| c != t && !known_list.iter().any(|k| k.tail == t && k.head == c && c != h))
            .collect();
        if got.tail_rank != sort_rank(&scorer.tails[h], t, &keep_tail)
            || got.head_rank != sort_rank(&scorer.heads[t], h, &keep_head)
        {
            mismatches += 1;
        }
        if got.tail_rank > raw.tail_rank || got.head_rank > raw.head_rank {
            worse += 1;
        }
    }
    (mismatches, worse)
}
