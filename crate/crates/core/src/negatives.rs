//! Negative tails for fine-tuning: uniform corruption, or same-type nodes
//! whose metadata overlaps the true tail's by less than a Jaccard threshold.

use std::collections::{HashMap, HashSet};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{config_err, Result};
use crate::eval::KnownTriples;
use crate::features::PairSets;
use crate::graph::{MachineKnowledgeGraph, RelationKind, Triple};
use crate::kge::CORRUPTION_RETRY_CAP;

pub const DEFAULT_TAU: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NegativeStrategy {
    Random,
    BiasedJaccard {
        tau: f64,
        /// Also require the candidate to share a machine configuration
        /// with the anchor.
        #[serde(default)]
        same_machine: bool,
    },
}

impl NegativeStrategy {
    pub fn biased() -> Self {
        NegativeStrategy::BiasedJaccard {
            tau: DEFAULT_TAU,
            same_machine: false,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            NegativeStrategy::Random => "random",
            NegativeStrategy::BiasedJaccard { .. } => "biased",
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let NegativeStrategy::BiasedJaccard { tau, .. } = self {
            if !(0.0..=1.0).contains(tau) {
                return Err(config_err(format!("tau {tau} must lie in [0, 1]")));
            }
        }
        Ok(())
    }
}

/// Candidate negative tails per anchor node. An anchor with an empty list
/// falls back to uniform sampling.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BiasedCandidates {
    lists: HashMap<usize, Vec<usize>>,
}

impl BiasedCandidates {
    pub fn from_lists(lists: HashMap<usize, Vec<usize>>) -> Self {
        Self { lists }
    }

    pub fn get(&self, node: usize) -> Option<&[usize]> {
        self.lists.get(&node).map(Vec::as_slice)
    }

    pub fn anchors(&self) -> impl Iterator<Item = usize> + '_ {
        self.lists.keys().copied()
    }

    /// Fraction of anchors whose list is non-empty.
    pub fn coverage(&self) -> f64 {
        if self.lists.is_empty() {
            return 0.0;
        }
        self.lists.values().filter(|l| !l.is_empty()).count() as f64 / self.lists.len() as f64
    }
}

/// Bitsets of the configuration roots that reach each node.
fn machine_membership(graph: &MachineKnowledgeGraph) -> Vec<Vec<u64>> {
    let roots = graph.configuration_roots();
    let words = roots.len().div_ceil(64).max(1);
    let mut sets = vec![vec![0u64; words]; graph.num_nodes()];
    for (k, &r) in roots.iter().enumerate() {
        sets[r][k / 64] |= 1 << (k % 64);
    }
    if let Some(order) = graph.topological_order() {
        for v in order {
            let parent_set = sets[v].clone();
            for &c in graph.successors(v, RelationKind::ConnectedTo) {
                for (a, b) in sets[c].iter_mut().zip(&parent_set) {
                    *a |= b;
                }
            }
        }
    }
    sets
}

/// For every node in `substitutes`: nodes of the same component type with
/// Jaccard below `tau`, excluding the node itself and its known substitutes.
/// Lists are in ascending node order.
pub fn build_biased_candidates(
    graph: &MachineKnowledgeGraph,
    substitutes: &[Triple],
    tau: f64,
    same_machine: bool,
) -> BiasedCandidates {
    let pairs = PairSets::new(graph.nodes());
    let labels = graph.type_labels();
    let mut by_type: HashMap<usize, Vec<usize>> = HashMap::new();
    for (i, &l) in labels.iter().enumerate() {
        by_type.entry(l).or_default().push(i);
    }
    let mut known: HashMap<usize, HashSet<usize>> = HashMap::new();
    for t in substitutes.iter().filter(|t| t.relation == RelationKind::SimilarTo) {
        known.entry(t.head).or_default().insert(t.tail);
        known.entry(t.tail).or_default().insert(t.head);
    }
    let machines = same_machine.then(|| machine_membership(graph));
    let mut anchors: Vec<usize> = known.keys().copied().collect();
    anchors.sort_unstable();
    let lists = anchors
        .into_iter()
        .map(|v| {
            let subs = &known[&v];
            let list = by_type[&labels[v]]
                .iter()
                .copied()
                .filter(|&c| {
                    c != v
                        && !subs.contains(&c)
                        && pairs.jaccard(v, c) < tau
                        && machines.as_ref().is_none_or(|m| {
                            m[v].iter().zip(&m[c]).any(|(a, b)| a & b != 0)
                        })
                })
                .collect();
            (v, list)
        })
        .collect();
    BiasedCandidates { lists }
}

/// Draws `k` negative tails for `positive` (with replacement).
///
/// Uniform draws reject the head itself and tails forming a known true
/// triple; biased draws pick uniformly from the tail's candidate list and
/// fall back to uniform draws when that list is missing or empty.
pub fn sample_negatives<R: Rng + ?Sized>(
    positive: &Triple,
    k: usize,
    num_entities: usize,
    candidates: Option<&BiasedCandidates>,
    known: &KnownTriples,
    rng: &mut R,
) -> Vec<usize> {
    let list = candidates
        .and_then(|c| c.get(positive.tail))
        .filter(|l| !l.is_empty());
    (0..k)
        .map(|_| match list {
            Some(l) => l[rng.random_range(0..l.len())],
            None => uniform_tail(positive, num_entities, known, rng),
        })
        .collect()
}

fn uniform_tail<R: Rng + ?Sized>(
    positive: &Triple,
    num_entities: usize,
    known: &KnownTriples,
    rng: &mut R,
) -> usize {
    let mut c = positive.tail;
    for _ in 0..CORRUPTION_RETRY_CAP {
        c = rng.random_range(0..num_entities);
        if c != positive.head && !known.contains(&Triple::new(positive.head, positive.relation, c)) {
            return c;
        }
    }
    log::warn!("uniform negative retry cap reached for {positive:?}");
    c
}
