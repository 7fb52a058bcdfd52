//! Latent-feature link predictors over graph topology: TransE, DistMult and
//! ComplEx scores with their analytic gradients.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{MkgError, Result};
use crate::graph::{RelationKind, Triple};
use crate::linalg::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    TransE,
    DistMult,
    ComplEx,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [ModelKind::TransE, ModelKind::DistMult, ModelKind::ComplEx];

    /// Stored row width for latent dimension `dim`.
    pub fn width(self, dim: usize) -> usize {
        match self {
            ModelKind::ComplEx => 2 * dim,
            _ => dim,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::TransE => "transe",
            ModelKind::DistMult => "distmult",
            ModelKind::ComplEx => "complex",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = MkgError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "transe" => Ok(ModelKind::TransE),
            "distmult" => Ok(ModelKind::DistMult),
            "complex" => Ok(ModelKind::ComplEx),
            other => Err(MkgError::Config(format!("unknown model kind {other:?}"))),
        }
    }
}

/// Entity and relation latent vectors for one model kind. ComplEx rows hold
/// the real parts in the first `dim` entries and imaginary parts after.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingTable {
    pub kind: ModelKind,
    pub dim: usize,
    pub entities: Matrix,
    pub relations: Matrix,
}

impl EmbeddingTable {
    pub fn width(&self) -> usize {
        self.kind.width(self.dim)
    }

    pub fn num_entities(&self) -> usize {
        self.entities.rows()
    }

    pub fn score(&self, head: usize, relation: RelationKind, tail: usize) -> Result<f64> {
        let n = self.num_entities();
        for i in [head, tail] {
            if i >= n {
                return Err(MkgError::Index { index: i, len: n });
            }
        }
        Ok(score_vectors(
            self.kind,
            self.entities.row(head),
            self.relations.row(relation.index()),
            self.entities.row(tail),
        ))
    }

    /// Scores `(head, relation, c)` for every entity `c`.
    pub fn score_tails(&self, head: usize, relation: RelationKind) -> Vec<f64> {
        let h = self.entities.row(head);
        let r = self.relations.row(relation.index());
        match self.kind {
            ModelKind::TransE => {
                let target: Vec<f64> = h.iter().zip(r).map(|(a, b)| a + b).collect();
                self.neg_distances(&target)
            }
            ModelKind::DistMult => {
                let q: Vec<f64> = h.iter().zip(r).map(|(a, b)| a * b).collect();
                self.dots(&q)
            }
            ModelKind::ComplEx => {
                let d = self.dim;
                let (hr, hi) = h.split_at(d);
                let (rr, ri) = r.split_at(d);
                let mut q = vec![0.0; 2 * d];
                for i in 0..d {
                    q[i] = hr[i] * rr[i] - hi[i] * ri[i];
                    q[d + i] = hi[i] * rr[i] + hr[i] * ri[i];
                }
                self.dots(&q)
            }
        }
    }

    /// Scores `(c, relation, tail)` for every entity `c`.
    pub fn score_heads(&self, relation: RelationKind, tail: usize) -> Vec<f64> {
        let t = self.entities.row(tail);
        let r = self.relations.row(relation.index());
        match self.kind {
            ModelKind::TransE => {
                let target: Vec<f64> = t.iter().zip(r).map(|(a, b)| a - b).collect();
                self.neg_distances(&target)
            }
            ModelKind::DistMult => {
                let q: Vec<f64> = t.iter().zip(r).map(|(a, b)| a * b).collect();
                self.dots(&q)
            }
            ModelKind::ComplEx => {
                let d = self.dim;
                let (tr, ti) = t.split_at(d);
                let (rr, ri) = r.split_at(d);
                let mut q = vec![0.0; 2 * d];
                for i in 0..d {
                    q[i] = rr[i] * tr[i] + ri[i] * ti[i];
                    q[d + i] = rr[i] * ti[i] - ri[i] * tr[i];
                }
                self.dots(&q)
            }
        }
    }

    fn dots(&self, q: &[f64]) -> Vec<f64> {
        (0..self.num_entities())
            .map(|c| crate::linalg::dot(self.entities.row(c), q))
            .collect()
    }

    fn neg_distances(&self, target: &[f64]) -> Vec<f64> {
        (0..self.num_entities())
            .map(|c| {
                -self
                    .entities
                    .row(c)
                    .iter()
                    .zip(target)
                    .map(|(x, y)| (x - y) * (x - y))
                    .sum::<f64>()
                    .sqrt()
            })
            .collect()
    }
}

/// Uniform initialization in `[−6/√dim, 6/√dim]`. TransE entity rows start
/// at unit norm.
pub fn init_embeddings(
    kind: ModelKind,
    num_entities: usize,
    dim: usize,
    seed: u64,
) -> EmbeddingTable {
    let width = kind.width(dim);
    let bound = if dim == 0 { 0.0 } else { 6.0 / (dim as f64).sqrt() };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |rows: usize| {
        let data = (0..rows * width)
            .map(|_| if bound > 0.0 { rng.random_range(-bound..=bound) } else { 0.0 })
            .collect();
        Matrix::from_vec(rows, width, data).expect("sized by construction")
    };
    let mut entities = draw(num_entities);
    let relations = draw(RelationKind::ALL.len());
    if kind == ModelKind::TransE {
        for i in 0..num_entities {
            normalize_row(entities.row_mut(i));
        }
    }
    EmbeddingTable {
        kind,
        dim,
        entities,
        relations,
    }
}

pub(crate) fn normalize_row(row: &mut [f64]) {
    let n = crate::linalg::norm(row);
    if n > 0.0 {
        row.iter_mut().for_each(|x| *x /= n);
    }
}

/// Raw triple score on explicit vectors.
///
/// * TransE: `−‖h + r − t‖₂`
/// * DistMult: `Σ h·r·t`
/// * ComplEx: `Re(Σ h·r·conj(t))`
pub fn score_vectors(kind: ModelKind, h: &[f64], r: &[f64], t: &[f64]) -> f64 {
    match kind {
        ModelKind::TransE => -h
            .iter()
            .zip(r)
            .zip(t)
            .map(|((a, b), c)| {
                let d = a + b - c;
                d * d
            })
            .sum::<f64>()
            .sqrt(),
        ModelKind::DistMult => h.iter().zip(r).zip(t).map(|((a, b), c)| a * b * c).sum(),
        ModelKind::ComplEx => {
            let d = h.len() / 2;
            let (hr, hi) = h.split_at(d);
            let (rr, ri) = r.split_at(d);
            let (tr, ti) = t.split_at(d);
            (0..d)
                .map(|i| {
                    hr[i] * rr[i] * tr[i] + hi[i] * rr[i] * ti[i] + hr[i] * ri[i] * ti[i]
                        - hi[i] * ri[i] * tr[i]
                })
                .sum()
        }
    }
}

/// Adds `upstream · ∂score/∂{h,r,t}` into the gradient buffers. TransE uses
/// a zero subgradient at `h + r = t`.
#[allow(clippy::too_many_arguments)]
pub fn accumulate_score_grad(
    kind: ModelKind,
    h: &[f64],
    r: &[f64],
    t: &[f64],
    upstream: f64,
    gh: &mut [f64],
    gr: &mut [f64],
    gt: &mut [f64],
) {
    match kind {
        ModelKind::TransE => {
            let diff: Vec<f64> = h.iter().zip(r).zip(t).map(|((a, b), c)| a + b - c).collect();
            let n = crate::linalg::norm(&diff);
            if n == 0.0 {
                return;
            }
            for i in 0..diff.len() {
                let g = upstream * diff[i] / n;
                gh[i] -= g;
                gr[i] -= g;
                gt[i] += g;
            }
        }
        ModelKind::DistMult => {
            for i in 0..h.len() {
                gh[i] += upstream * r[i] * t[i];
                gr[i] += upstream * h[i] * t[i];
                gt[i] += upstream * h[i] * r[i];
            }
        }
        ModelKind::ComplEx => {
            let d = h.len() / 2;
            for i in 0..d {
                let (hr, hi, rr, ri, tr, ti) = (h[i], h[d + i], r[i], r[d + i], t[i], t[d + i]);
                gh[i] += upstream * (rr * tr + ri * ti);
                gh[d + i] += upstream * (rr * ti - ri * tr);
                gr[i] += upstream * (hr * tr + hi * ti);
                gr[d + i] += upstream * (hr * ti - hi * tr);
                gt[i] += upstream * (hr * rr - hi * ri);
                gt[d + i] += upstream * (hi * rr + hr * ri);
            }
        }
    }
}

/// Default number of resampling attempts in [`corrupt_negative`].
pub const CORRUPTION_RETRY_CAP: usize = 64;

/// Replaces the head or the tail (probability ½ each) with a uniformly drawn
/// entity, resampling while the result is a self-loop or a known true triple.
/// Returns the candidate and whether it passed the filter; after `retry_cap`
/// attempts the last candidate is returned with a warning.
pub fn corrupt_negative<R: Rng + ?Sized>(
    triple: &Triple,
    num_entities: usize,
    known: &HashSet<Triple>,
    rng: &mut R,
    retry_cap: usize,
) -> (Triple, bool) {
    let mut candidate = *triple;
    for _ in 0..retry_cap.max(1) {
        let replacement = rng.random_range(0..num_entities);
        candidate = if rng.random_bool(0.5) {
            Triple::new(replacement, triple.relation, triple.tail)
        } else {
            Triple::new(triple.head, triple.relation, replacement)
        };
        if candidate.head != candidate.tail && !known.contains(&candidate) {
            return (candidate, true);
        }
    }
    log::warn!("negative sampling retry cap reached for {triple:?}; keeping {candidate:?}");
    (candidate, false)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_scores() {
        assert_eq!(
            score_vectors(ModelKind::DistMult, &[1.0, 2.0], &[1.0, 0.0], &[3.0, 1.0]),
            3.0
        );
        let h = [0.3, -0.2, 0.5];
        let r = [0.1, 0.4, -0.3];
        let t: Vec<f64> = h.iter().zip(&r).map(|(a, b)| a + b).collect();
        assert_eq!(score_vectors(ModelKind::TransE, &h, &r, &t), 0.0);
        assert!(score_vectors(ModelKind::TransE, &h, &r, &h) < 0.0);
    }

    #[test]
    fn complex_real_restriction_is_distmult() {
        let h = [0.3, -0.7, 0.0, 0.0];
        let r = [1.5, 0.2, 0.0, 0.0];
        let t = [-0.4, 0.9, 0.0, 0.0];
        let c = score_vectors(ModelKind::ComplEx, &h, &r, &t);
        let d = score_vectors(ModelKind::DistMult, &h[..2], &r[..2], &t[..2]);
        assert!((c - d).abs() < 1e-15);
    }

    #[test]
    fn init_is_deterministic_and_bounded() {
        let a = init_embeddings(ModelKind::DistMult, 30, 100, 9);
        let b = init_embeddings(ModelKind::DistMult, 30, 100, 9);
        assert_eq!(a, b);
        assert!(a.entities.as_slice().iter().all(|x| x.abs() <= 0.6));
        let empty = init_embeddings(ModelKind::ComplEx, 0, 100, 9);
        assert_eq!(empty.entities.rows(), 0);
        assert_eq!(empty.relations.cols(), 200);
        let t = init_embeddings(ModelKind::TransE, 5, 10, 1);
        for i in 0..5 {
            assert!((crate::linalg::norm(t.entities.row(i)) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn batch_scoring_matches_pointwise() {
        for kind in ModelKind::ALL {
            let table = init_embeddings(kind, 12, 6, 3);
            let tails = table.score_tails(4, RelationKind::SimilarTo);
            let heads = table.score_heads(RelationKind::ConnectedTo, 7);
            for c in 0..12 {
                let s = table.score(4, RelationKind::SimilarTo, c).unwrap();
                assert!((tails[c] - s).abs() < 1e-12, "{kind}");
                let s = table.score(c, RelationKind::ConnectedTo, 7).unwrap();
                assert!((heads[c] - s).abs() < 1e-12, "{kind}");
            }
        }
    }

    #[test]
    fn index_errors() {
        let table = init_embeddings(ModelKind::DistMult, 3, 4, 0);
        assert!(matches!(
            table.score(0, RelationKind::SimilarTo, 3),
            Err(MkgError::Index { index: 3, len: 3 })
        ));
    }

    #[test]
    fn degenerate_two_node_corruption_hits_cap() {
        let t = Triple::new(0, RelationKind::ConnectedTo, 1);
        let known = HashSet::from([t]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        // Every candidate is either the true triple or a self-loop.
        let (_, ok) = corrupt_negative(&t, 2, &known, &mut rng, 16);
        assert!(!ok);
    }

    #[test]
    fn corruption_avoids_known() {
        let known: HashSet<Triple> = (1..6)
            .map(|i| Triple::new(0, RelationKind::ConnectedTo, i))
            .collect();
        let t = Triple::new(0, RelationKind::ConnectedTo, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            let (c, ok) = corrupt_negative(&t, 10, &known, &mut rng, CORRUPTION_RETRY_CAP);
            assert!(ok);
            assert!(!known.contains(&c));
            assert_ne!(c.head, c.tail);
        }
    }
}
