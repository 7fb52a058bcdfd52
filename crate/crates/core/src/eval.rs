//! Filtered link-prediction ranking, MR / MRR / Hits@k, and cosine
//! nearest-neighbour queries.

use std::collections::{HashMap, HashSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{config_err, MkgError, Result};
use crate::graph::{RelationKind, Triple};
use crate::linalg::{dot, norm, Matrix};

/// Anything that can score a query against every entity.
pub trait TripleScorer: Sync {
    fn num_entities(&self) -> usize;

    /// Scores of `(head, relation, c)` for every entity `c`.
    fn score_tails(&self, head: usize, relation: RelationKind) -> Vec<f64>;

    /// Scores of `(c, relation, tail)` for every entity `c`.
    fn score_heads(&self, relation: RelationKind, tail: usize) -> Vec<f64>;
}

impl TripleScorer for crate::kge::EmbeddingTable {
    fn num_entities(&self) -> usize {
        self.entities.rows()
    }

    fn score_tails(&self, head: usize, relation: RelationKind) -> Vec<f64> {
        crate::kge::EmbeddingTable::score_tails(self, head, relation)
    }

    fn score_heads(&self, relation: RelationKind, tail: usize) -> Vec<f64> {
        crate::kge::EmbeddingTable::score_heads(self, relation, tail)
    }
}

/// Known true triples indexed for filtering in both directions.
#[derive(Debug, Clone, Default)]
pub struct KnownTriples {
    tails: HashMap<(usize, RelationKind), HashSet<usize>>,
    heads: HashMap<(usize, RelationKind), HashSet<usize>>,
}

impl KnownTriples {
    pub fn new<'a>(triples: impl IntoIterator<Item = &'a Triple>) -> Self {
        let mut k = Self::default();
        for t in triples {
            k.tails.entry((t.head, t.relation)).or_default().insert(t.tail);
            k.heads.entry((t.tail, t.relation)).or_default().insert(t.head);
        }
        k
    }

    pub fn contains(&self, t: &Triple) -> bool {
        self.tails
            .get(&(t.head, t.relation))
            .is_some_and(|s| s.contains(&t.tail))
    }

    fn true_tails(&self, head: usize, rel: RelationKind) -> Option<&HashSet<usize>> {
        self.tails.get(&(head, rel))
    }

    fn true_heads(&self, tail: usize, rel: RelationKind) -> Option<&HashSet<usize>> {
        self.heads.get(&(tail, rel))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RankOptions {
    /// Remove other known-true answers before ranking.
    pub filtered: bool,
    /// Restrict candidates to entities sharing the target's label.
    pub same_type_labels: Option<Vec<usize>>,
}

impl RankOptions {
    pub fn filtered() -> Self {
        Self {
            filtered: true,
            same_type_labels: None,
        }
    }
}

/// Rank of `target` among `candidates` under `scores`: one plus the number
/// of strictly better candidates plus half the number of ties.
pub fn tie_averaged_rank(
    scores: &[f64],
    target: usize,
    mut keep: impl FnMut(usize) -> bool,
) -> Result<f64> {
    let st = scores[target];
    if st.is_nan() {
        return Err(MkgError::Internal(format!("target {target} scored NaN")));
    }
    let (mut higher, mut ties) = (0usize, 0usize);
    for (c, &s) in scores.iter().enumerate() {
        if c == target || !keep(c) {
            continue;
        }
        if s > st || s.is_nan() {
            higher += 1;
        } else if s == st {
            ties += 1;
        }
    }
    Ok(1.0 + higher as f64 + 0.5 * ties as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TripleRank {
    pub triple: Triple,
    pub tail_rank: f64,
    pub head_rank: f64,
}

/// Ranks one triple in both directions. The query entity itself is never a
/// candidate (self-loops cannot be true).
pub fn rank_triple<S: TripleScorer + ?Sized>(
    scorer: &S,
    triple: &Triple,
    known: &KnownTriples,
    options: &RankOptions,
) -> Result<TripleRank> {
    let n = scorer.num_entities();
    if triple.head >= n || triple.tail >= n {
        return Err(MkgError::Index {
            index: triple.head.max(triple.tail),
            len: n,
        });
    }
    let labels = options.same_type_labels.as_deref();
    let direction = |scores: Vec<f64>, query: usize, target: usize, truth: Option<&HashSet<usize>>| {
        if let Some(l) = labels {
            if l[target] != l[query] {
                return Err(MkgError::Internal(format!(
                    "target {target} excluded by same-type candidate restriction"
                )));
            }
        }
        tie_averaged_rank(&scores, target, |c| {
            c != query
                && labels.is_none_or(|l| l[c] == l[target])
                && !(options.filtered && truth.is_some_and(|s| s.contains(&c)))
        })
    };
    let tail_rank = direction(
        scorer.score_tails(triple.head, triple.relation),
        triple.head,
        triple.tail,
        known.true_tails(triple.head, triple.relation),
    )?;
    let head_rank = direction(
        scorer.score_heads(triple.relation, triple.tail),
        triple.tail,
        triple.head,
        known.true_heads(triple.tail, triple.relation),
    )?;
    Ok(TripleRank {
        triple: *triple,
        tail_rank,
        head_rank,
    })
}

/// Ranks every triple; parallel over triples, results in input order.
pub fn rank_all<S: TripleScorer + ?Sized>(
    scorer: &S,
    triples: &[Triple],
    known: &KnownTriples,
    options: &RankOptions,
) -> Result<Vec<TripleRank>> {
    triples
        .par_iter()
        .map(|t| rank_triple(scorer, t, known, options))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub count: usize,
    pub mr: f64,
    pub mrr: f64,
    pub hits1: f64,
    pub hits3: f64,
    pub hits10: f64,
}

pub fn compute_metrics(ranks: &[f64]) -> Result<Metrics> {
    if ranks.is_empty() {
        return Err(config_err("cannot compute metrics over zero ranks"));
    }
    let n = ranks.len() as f64;
    let hits = |k: f64| ranks.iter().filter(|&&r| r <= k).count() as f64 / n;
    Ok(Metrics {
        count: ranks.len(),
        mr: ranks.iter().sum::<f64>() / n,
        mrr: ranks.iter().map(|r| 1.0 / r).sum::<f64>() / n,
        hits1: hits(1.0),
        hits3: hits(3.0),
        hits10: hits(10.0),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunInfo {
    pub model: String,
    pub strategy: String,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingReport {
    pub run: RunInfo,
    pub ranks: Vec<TripleRank>,
    /// Pooled over both directions.
    pub overall: Metrics,
    pub tail: Metrics,
    pub head: Metrics,
}

impl RankingReport {
    pub fn new(run: RunInfo, ranks: Vec<TripleRank>) -> Result<Self> {
        let tails: Vec<f64> = ranks.iter().map(|r| r.tail_rank).collect();
        let heads: Vec<f64> = ranks.iter().map(|r| r.head_rank).collect();
        let both: Vec<f64> = tails.iter().chain(&heads).copied().collect();
        Ok(Self {
            run,
            overall: compute_metrics(&both)?,
            tail: compute_metrics(&tails)?,
            head: compute_metrics(&heads)?,
            ranks,
        })
    }
}

/// Evaluates `triples` and packages the report.
pub fn evaluate<S: TripleScorer + ?Sized>(
    scorer: &S,
    triples: &[Triple],
    known: &KnownTriples,
    options: &RankOptions,
    run: RunInfo,
) -> Result<RankingReport> {
    RankingReport::new(run, rank_all(scorer, triples, known, options)?)
}

/// Top-`k` rows by cosine similarity to row `query` (query excluded), ties
/// broken by ascending index. Zero rows have similarity 0.
pub fn nearest_neighbors(embeddings: &Matrix, query: usize, k: usize) -> Result<Vec<(usize, f64)>> {
    if query >= embeddings.rows() {
        return Err(MkgError::Index {
            index: query,
            len: embeddings.rows(),
        });
    }
    let q = embeddings.row(query);
    let qn = norm(q);
    if qn == 0.0 {
        return Err(MkgError::UndefinedDirection(format!(
            "row {query} is the zero vector"
        )));
    }
    let mut sims: Vec<(usize, f64)> = (0..embeddings.rows())
        .filter(|&i| i != query)
        .map(|i| {
            let r = embeddings.row(i);
            let rn = norm(r);
            let s = if rn == 0.0 { 0.0 } else { dot(q, r) / (qn * rn) };
            (i, s)
        })
        .collect();
    sims.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    sims.truncate(k);
    Ok(sims)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

pub fn mean_std(values: &[f64]) -> MeanStd {
    if values.is_empty() {
        return MeanStd { mean: f64::NAN, std: f64::NAN };
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = if values.len() > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    MeanStd { mean, std }
}

/// Aligned text table with MR, MRR and Hits@1/3/10 as mean ± std over replicas.
pub fn summary_table(rows: &[(String, Vec<Metrics>)]) -> String {
    let name_w = rows.iter().map(|r| r.0.len()).max().unwrap_or(5).max(5);
    let mut out = format!(
        "{:<name_w$}  {:>14}  {:>15}  {:>15}  {:>15}  {:>15}\n",
        "Model", "MR", "MRR", "Hits@1", "Hits@3", "Hits@10"
    );
    for (name, ms) in rows {
        let col = |f: fn(&Metrics) -> f64| mean_std(&ms.iter().map(f).collect::<Vec<_>>());
        let mr = col(|m| m.mr);
        let cells: Vec<String> = [
            col(|m| m.mrr),
            col(|m| m.hits1),
            col(|m| m.hits3),
            col(|m| m.hits10),
        ]
        .iter()
        .map(|c| format!("{:.3} ± {:.3}", c.mean, c.std))
        .collect();
        out.push_str(&format!(
            "{:<name_w$}  {:>14}  {:>15}  {:>15}  {:>15}  {:>15}\n",
            name,
            format!("{:.1} ± {:.1}", mr.mean, mr.std),
            cells[0],
            cells[1],
            cells[2],
            cells[3]
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Fixed(Vec<f64>);

    impl TripleScorer for Fixed {
        fn num_entities(&self) -> usize {
            self.0.len()
        }
        fn score_tails(&self, _: usize, _: RelationKind) -> Vec<f64> {
            self.0.clone()
        }
        fn score_heads(&self, _: RelationKind, _: usize) -> Vec<f64> {
            self.0.clone()
        }
    }

    #[test]
    fn top_and_tie_ranks() {
        let mut s: Vec<f64> = (0..10).map(|i| i as f64 * 0.1).collect();
        s[5] = 5.0;
        assert_eq!(tie_averaged_rank(&s, 5, |_| true).unwrap(), 1.0);
        s[7] = 5.0;
        assert_eq!(tie_averaged_rank(&s, 5, |_| true).unwrap(), 1.5);
    }

    #[test]
    fn metrics_on_fixed_ranks() {
        let m = compute_metrics(&[1.0, 2.0, 4.0]).unwrap();
        assert!((m.mrr - (1.0 + 0.5 + 0.25) / 3.0).abs() < 1e-15);
        assert!((m.mr - 7.0 / 3.0).abs() < 1e-15);
        assert_eq!((m.hits1, m.hits3, m.hits10), (1.0 / 3.0, 2.0 / 3.0, 1.0));
        let ones = compute_metrics(&[1.0; 4]).unwrap();
        assert_eq!((ones.mr, ones.mrr, ones.hits1, ones.hits10), (1.0, 1.0, 1.0, 1.0));
        assert!(matches!(compute_metrics(&[]), Err(MkgError::Config(_))));
    }

    #[test]
    fn filtering_removes_other_true_answers() {
        // scores favour 3 then 2; query 0 -> target 2, with (0,r,3) known.
        let scorer = Fixed(vec![0.0, 0.1, 0.5, 0.9, 0.2]);
        let target = Triple::new(0, RelationKind::SimilarTo, 2);
        let other = Triple::new(0, RelationKind::SimilarTo, 3);
        let known = KnownTriples::new([&target, &other]);
        let raw = rank_triple(&scorer, &target, &known, &RankOptions::default()).unwrap();
        let filt = rank_triple(&scorer, &target, &known, &RankOptions::filtered()).unwrap();
        assert_eq!(raw.tail_rank, 2.0);
        assert_eq!(filt.tail_rank, 1.0);
    }

    #[test]
    fn same_type_restriction() {
        let scorer = Fixed(vec![0.0, 0.9, 0.5, 0.8]);
        let t = Triple::new(0, RelationKind::SimilarTo, 2);
        let known = KnownTriples::new([&t]);
        let opts = RankOptions {
            filtered: true,
            same_type_labels: Some(vec![0, 1, 0, 0]),
        };
        let r = rank_triple(&scorer, &t, &known, &opts).unwrap();
        assert_eq!(r.tail_rank, 2.0);
        let bad = RankOptions {
            filtered: true,
            same_type_labels: Some(vec![0, 0, 1, 0]),
        };
        assert!(matches!(
            rank_triple(&scorer, &t, &known, &bad),
            Err(MkgError::Internal(_))
        ));
    }

    #[test]
    fn neighbors_basic() {
        let m = Matrix::from_rows(&[
            vec![1.0, 0.0],
            vec![0.0, 1.0],
            vec![2.0, 0.0],
            vec![1.0, 1.0],
        ])
        .unwrap();
        let nn = nearest_neighbors(&m, 0, 2).unwrap();
        assert_eq!(nn[0].0, 2);
        assert!((nn[0].1 - 1.0).abs() < 1e-15);
        assert_eq!(nn[1].0, 3);
        let z = Matrix::zeros(2, 2);
        assert!(matches!(
            nearest_neighbors(&z, 0, 1),
            Err(MkgError::UndefinedDirection(_))
        ));
    }
}
