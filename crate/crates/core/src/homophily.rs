//! Label homophily measures over a subset of relations.

use serde::{Deserialize, Serialize};

use crate::error::{config_err, Result};
use crate::graph::{MachineKnowledgeGraph, RelationKind};
use crate::linalg::Matrix;

fn edges<'a>(
    graph: &'a MachineKnowledgeGraph,
    relations: &'a [RelationKind],
) -> impl Iterator<Item = (usize, usize)> + 'a {
    graph
        .triples()
        .iter()
        .filter(move |t| relations.contains(&t.relation))
        .map(|t| (t.head, t.tail))
}

/// Fraction of edges whose endpoints share a label. Zero with no edges.
pub fn edge_homophily(graph: &MachineKnowledgeGraph, labels: &[usize], relations: &[RelationKind]) -> f64 {
    let (mut same, mut total) = (0usize, 0usize);
    for (u, v) in edges(graph, relations) {
        total += 1;
        same += usize::from(labels[u] == labels[v]);
    }
    if total == 0 {
        0.0
    } else {
        same as f64 / total as f64
    }
}

/// Class-insensitive homophily
/// `ĥ = 1/(C−1) · Σ_k max(0, h_k − |C_k|/N)`, where `h_k` is the share of
/// same-class neighbours summed over all class-k nodes (degree-weighted).
/// Edges are treated as undirected.
pub fn class_insensitive_homophily(
    graph: &MachineKnowledgeGraph,
    labels: &[usize],
    relations: &[RelationKind],
) -> Result<f64> {
    let classes = labels.iter().max().map_or(0, |m| m + 1);
    let mut sizes = vec![0usize; classes];
    for &l in labels {
        sizes[l] += 1;
    }
    let present = sizes.iter().filter(|&&s| s > 0).count();
    if present < 2 {
        return Err(config_err("class-insensitive homophily needs at least two classes"));
    }
    let mut same = vec![0usize; classes];
    let mut degree = vec![0usize; classes];
    for (u, v) in edges(graph, relations) {
        let eq = usize::from(labels[u] == labels[v]);
        for w in [u, v] {
            degree[labels[w]] += 1;
            same[labels[w]] += eq;
        }
    }
    let n = labels.len() as f64;
    let sum: f64 = (0..classes)
        .filter(|&k| degree[k] > 0)
        .map(|k| (same[k] as f64 / degree[k] as f64 - sizes[k] as f64 / n).max(0.0))
        .sum();
    Ok(sum / (present - 1) as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompatibilityMatrix {
    pub classes: Vec<String>,
    /// `H[k][l]` = share of class-k edges that end in class l.
    pub matrix: Matrix,
    /// Rows with no outgoing edges (left all-zero).
    pub empty_rows: Vec<usize>,
}

impl CompatibilityMatrix {
    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.matrix.rows()).map(|k| self.matrix.row(k).iter().sum()).collect()
    }
}

pub fn compatibility_matrix(
    graph: &MachineKnowledgeGraph,
    labels: &[usize],
    class_names: &[String],
    relations: &[RelationKind],
) -> CompatibilityMatrix {
    let c = class_names.len();
    let mut m = Matrix::zeros(c, c);
    for (u, v) in edges(graph, relations) {
        m[(labels[u], labels[v])] += 1.0;
    }
    let mut empty_rows = Vec::new();
    for k in 0..c {
        let row = m.row_mut(k);
        let total: f64 = row.iter().sum();
        if total == 0.0 {
            empty_rows.push(k);
        } else {
            row.iter_mut().for_each(|x| *x /= total);
        }
    }
    CompatibilityMatrix {
        classes: class_names.to_vec(),
        matrix: m,
        empty_rows,
    }
}

/// Edge homophily, ĥ and the compatibility matrix for one relation filter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HomophilyReport {
    pub relations: Vec<RelationKind>,
    pub edge_homophily: f64,
    pub class_insensitive: f64,
    pub compatibility: CompatibilityMatrix,
}

pub fn homophily_report(graph: &MachineKnowledgeGraph, relations: &[RelationKind]) -> Result<HomophilyReport> {
    let labels = graph.type_labels();
    let names = graph.component_types();
    Ok(HomophilyReport {
        relations: relations.to_vec(),
        edge_homophily: edge_homophily(graph, &labels, relations),
        class_insensitive: class_insensitive_homophily(graph, &labels, relations)?,
        compatibility: compatibility_matrix(graph, &labels, &names, relations),
    })
}
