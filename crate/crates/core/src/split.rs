//! Train / validation / test partition of similarTo triples.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{config_err, Result};
use crate::graph::{MachineKnowledgeGraph, RelationKind, Triple};

pub const DEFAULT_RATIOS: [f64; 3] = [0.70, 0.15, 0.15];

/// Indices into the graph's triple list for each split.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TripleSplit {
    pub seed: u64,
    pub train: Vec<usize>,
    pub valid: Vec<usize>,
    pub test: Vec<usize>,
}

impl TripleSplit {
    pub fn resolve(&self, graph: &MachineKnowledgeGraph, idx: &[usize]) -> Vec<Triple> {
        let all = graph.triples();
        idx.iter().map(|&i| all[i]).collect()
    }

    pub fn train_triples(&self, graph: &MachineKnowledgeGraph) -> Vec<Triple> {
        self.resolve(graph, &self.train)
    }

    pub fn valid_triples(&self, graph: &MachineKnowledgeGraph) -> Vec<Triple> {
        self.resolve(graph, &self.valid)
    }

    pub fn test_triples(&self, graph: &MachineKnowledgeGraph) -> Vec<Triple> {
        self.resolve(graph, &self.test)
    }

    /// Train-split similarTo triples only.
    pub fn train_similar(&self, graph: &MachineKnowledgeGraph) -> Vec<Triple> {
        self.train_triples(graph)
            .into_iter()
            .filter(|t| t.relation == RelationKind::SimilarTo)
            .collect()
    }
}

/// Splits `total` into integer parts proportional to `ratios`, handing the
/// leftover units to the largest fractional remainders (earliest on ties).
pub fn largest_remainder(total: usize, ratios: &[f64]) -> Vec<usize> {
    let exact: Vec<f64> = ratios.iter().map(|r| r * total as f64).collect();
    let mut counts: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..ratios.len()).collect();
    order.sort_by(|&a, &b| {
        let (ra, rb) = (exact[a] - exact[a].floor(), exact[b] - exact[b].floor());
        rb.partial_cmp(&ra).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b))
    });
    for &i in order.iter().take(total.saturating_sub(assigned)) {
        counts[i] += 1;
    }
    counts
}

/// All connectedTo triples go to train; similarTo triples are shuffled with
/// `seed` and cut at the ratio boundaries.
pub fn split_similar_edges(
    graph: &MachineKnowledgeGraph,
    ratios: [f64; 3],
    seed: u64,
) -> Result<TripleSplit> {
    if ratios.iter().any(|r| !(0.0..=1.0).contains(r)) {
        return Err(config_err(format!("split ratios {ratios:?} must lie in [0, 1]")));
    }
    if (ratios.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(config_err(format!("split ratios {ratios:?} must sum to 1")));
    }
    let mut train = Vec::new();
    let mut similar = Vec::new();
    for (i, t) in graph.triples().iter().enumerate() {
        match t.relation {
            RelationKind::ConnectedTo => train.push(i),
            RelationKind::SimilarTo => similar.push(i),
        }
    }
    if similar.is_empty() {
        return Err(config_err("graph has no similarTo triples to split"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    similar.shuffle(&mut rng);
    let counts = largest_remainder(similar.len(), &ratios);
    let (tr, rest) = similar.split_at(counts[0]);
    let (va, te) = rest.split_at(counts[1]);
    train.extend_from_slice(tr);
    Ok(TripleSplit {
        seed,
        train,
        valid: va.to_vec(),
        test: te.to_vec(),
    })
}
