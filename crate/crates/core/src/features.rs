//! Metadata feature matrix and Jaccard similarity over metadata pairs.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::graph::ComponentNode;
use crate::linalg::Matrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NumericColumn {
    pub column: usize,
    pub mean: f64,
    pub std: f64,
}

/// Column layout of the feature matrix: one-hot columns for frequent
/// categorical `(key, value)` pairs and one standardized column per numeric key.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeVocabulary {
    pub min_freq: usize,
    pub categorical: BTreeMap<String, BTreeMap<String, usize>>,
    pub numeric: BTreeMap<String, NumericColumn>,
    columns: usize,
}

impl AttributeVocabulary {
    pub fn num_columns(&self) -> usize {
        self.columns
    }

    /// Human-readable column names, indexed by column.
    pub fn column_names(&self) -> Vec<String> {
        let mut names = vec![String::new(); self.columns];
        for (k, col) in &self.numeric {
            names[col.column] = k.clone();
        }
        for (k, values) in &self.categorical {
            for (v, &c) in values {
                names[c] = format!("{k}={v}");
            }
        }
        names
    }
}

pub fn build_vocabulary(nodes: &[ComponentNode], min_freq: usize) -> AttributeVocabulary {
    let min_freq = min_freq.max(1);
    let mut cat_counts: BTreeMap<&str, BTreeMap<String, usize>> = BTreeMap::new();
    let mut num_values: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for n in nodes {
        for (k, v) in &n.metadata {
            match v.as_number() {
                Some(x) => num_values.entry(k).or_default().push(x),
                None => *cat_counts.entry(k).or_default().entry(v.to_string()).or_default() += 1,
            }
        }
    }

    let mut columns = 0;
    let mut numeric = BTreeMap::new();
    for (k, values) in num_values {
        if values.len() < min_freq {
            continue;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        let std = var.sqrt();
        if !(std > 1e-12 * mean.abs().max(1.0)) {
            continue;
        }
        numeric.insert(
            k.to_string(),
            NumericColumn {
                column: columns,
                mean,
                std,
            },
        );
        columns += 1;
    }
    let mut categorical: BTreeMap<String, BTreeMap<String, usize>> = BTreeMap::new();
    for (k, values) in cat_counts {
        for (v, c) in values {
            if c >= min_freq {
                categorical.entry(k.to_string()).or_default().insert(v, columns);
                columns += 1;
            }
        }
    }
    AttributeVocabulary {
        min_freq,
        categorical,
        numeric,
        columns,
    }
}

/// Encodes nodes into an `N × columns` matrix; absent attributes stay zero.
pub fn encode(nodes: &[ComponentNode], vocab: &AttributeVocabulary) -> Matrix {
    let mut m = Matrix::zeros(nodes.len(), vocab.num_columns());
    for (i, n) in nodes.iter().enumerate() {
        let row = m.row_mut(i);
        for (k, v) in &n.metadata {
            match v.as_number() {
                Some(x) => {
                    if let Some(col) = vocab.numeric.get(k) {
                        row[col.column] = (x - col.mean) / col.std;
                    }
                }
                None => {
                    if let Some(&c) = vocab
                        .categorical
                        .get(k)
                        .and_then(|vals| vals.get(&v.to_string()))
                    {
                        row[c] = 1.0;
                    }
                }
            }
        }
    }
    m
}

/// `|A ∩ B| / |A ∪ B|` over `(key, value)` metadata pairs; 1 when both are empty.
pub fn jaccard(a: &ComponentNode, b: &ComponentNode) -> f64 {
    let inter = a
        .metadata
        .iter()
        .filter(|(k, v)| b.metadata.get(*k).is_some_and(|w| w.to_string() == v.to_string()))
        .count();
    let union = a.metadata.len() + b.metadata.len() - inter;
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

/// Interned, sorted metadata pair sets for repeated Jaccard evaluation.
#[derive(Debug, Clone)]
pub struct PairSets {
    sets: Vec<Vec<u32>>,
}

impl PairSets {
    pub fn new(nodes: &[ComponentNode]) -> Self {
        let mut intern: HashMap<(String, String), u32> = HashMap::new();
        let sets = nodes
            .iter()
            .map(|n| {
                let mut ids: Vec<u32> = n
                    .metadata
                    .iter()
                    .map(|(k, v)| {
                        let next = intern.len() as u32;
                        *intern.entry((k.clone(), v.to_string())).or_insert(next)
                    })
                    .collect();
                ids.sort_unstable();
                ids
            })
            .collect();
        Self { sets }
    }

    pub fn jaccard(&self, a: usize, b: usize) -> f64 {
        let (x, y) = (&self.sets[a], &self.sets[b]);
        let (mut i, mut j, mut inter) = (0, 0, 0usize);
        while i < x.len() && j < y.len() {
            match x[i].cmp(&y[j]) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    inter += 1;
                    i += 1;
                    j += 1;
                }
            }
        }
        let union = x.len() + y.len() - inter;
        if union == 0 {
            1.0
        } else {
            inter as f64 / union as f64
        }
    }
}
