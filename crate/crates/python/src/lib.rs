//! Python module `mkg`: graph loading and synthesis, the two-stage
//! embedding pipeline, filtered ranking metrics and neighbour queries.

use std::collections::HashMap;
use std::path::PathBuf;

use mkg_core::ensemble::score_g;
use mkg_core::eval::{compute_metrics, nearest_neighbors, Metrics};
use mkg_core::features::jaccard as jaccard_nodes;
use mkg_core::graph::{graph_stats, normalize_part_id as normalize, MachineKnowledgeGraph};
use mkg_core::homophily::homophily_report;
use mkg_core::io;
use mkg_core::negatives::NegativeStrategy;
use mkg_core::pipeline::{embed_features, run_replica, EnsembleOutcome, ExperimentConfig, ReplicaOutcome};
use mkg_core::split::TripleSplit;
use mkg_core::synth::{generate, SynthConfig};
use mkg_core::{MkgError, RelationKind};
use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyKeyError, PyValueError};
use pyo3::prelude::*;

create_exception!(mkg, MkgException, PyException, "Error raised by the mkg core library.");

fn err(e: MkgError) -> PyErr {
    match e {
        MkgError::Config(_) | MkgError::InvalidIdentifier(_) => PyValueError::new_err(e.to_string()),
        MkgError::UnknownPart(_) => PyKeyError::new_err(e.to_string()),
        other => MkgException::new_err(other.to_string()),
    }
}

fn metrics_dict(m: &Metrics) -> HashMap<&'static str, f64> {
    HashMap::from([
        ("mr", m.mr),
        ("mrr", m.mrr),
        ("hits1", m.hits1),
        ("hits3", m.hits3),
        ("hits10", m.hits10),
    ])
}

fn relations(name: &str) -> PyResult<Vec<RelationKind>> {
    match name {
        "connectedTo" | "connected_to" => Ok(vec![RelationKind::ConnectedTo]),
        "similarTo" | "similar_to" => Ok(vec![RelationKind::SimilarTo]),
        "all" => Ok(RelationKind::ALL.to_vec()),
        other => Err(PyValueError::new_err(format!("unknown relation filter {other:?}"))),
    }
}

/// Canonical form of a part identifier.
#[pyfunction]
fn normalize_part_id(raw: &str) -> PyResult<String> {
    normalize(raw).map(|p| p.to_string()).map_err(err)
}

/// MR, MRR and Hits@1/3/10 of a list of ranks.
#[pyfunction]
fn metrics(ranks: Vec<f64>) -> PyResult<HashMap<&'static str, f64>> {
    compute_metrics(&ranks).map(|m| metrics_dict(&m)).map_err(err)
}

#[pyclass(name = "Graph", module = "mkg", frozen)]
struct PyGraph {
    inner: MachineKnowledgeGraph,
    families: Vec<Vec<String>>,
}

impl PyGraph {
    fn index(&self, part: &str) -> PyResult<usize> {
        let id = normalize(part).map_err(err)?;
        self.inner.resolve(&id).map_err(err)
    }
}

#[pymethods]
impl PyGraph {
    /// Reads `nodes.jsonl`, `edges.csv` and optionally `pairs.csv`.
    #[staticmethod]
    #[pyo3(signature = (nodes, edges, pairs=None))]
    fn load(nodes: PathBuf, edges: PathBuf, pairs: Option<PathBuf>) -> PyResult<Self> {
        let inner = io::load_graph(&nodes, &edges, pairs.as_deref(), false).map_err(err)?;
        Ok(Self {
            inner,
            families: Vec::new(),
        })
    }

    /// Synthetic corpus from a size preset; also written to `out_dir` if given.
    #[staticmethod]
    #[pyo3(signature = (preset="desk", seed=None, out_dir=None))]
    fn synth(preset: &str, seed: Option<u64>, out_dir: Option<PathBuf>) -> PyResult<Self> {
        let mut cfg = SynthConfig::preset(preset).map_err(err)?;
        if let Some(s) = seed {
            cfg.seed = s;
        }
        let corpus = generate(&cfg).map_err(err)?;
        if let Some(dir) = out_dir {
            std::fs::create_dir_all(&dir)?;
            corpus.write(&dir).map_err(err)?;
        }
        Ok(Self {
            inner: corpus.build_graph().map_err(err)?,
            families: corpus
                .families
                .iter()
                .map(|f| f.iter().map(|p| p.to_string()).collect())
                .collect(),
        })
    }

    #[getter]
    fn num_nodes(&self) -> usize {
        self.inner.num_nodes()
    }

    #[getter]
    fn num_triples(&self) -> usize {
        self.inner.triples().len()
    }

    /// Ground-truth substitute families (synthetic graphs only).
    #[getter]
    fn families(&self) -> Vec<Vec<String>> {
        self.families.clone()
    }

    fn fingerprint(&self) -> String {
        self.inner.fingerprint()
    }

    fn node_ids(&self) -> Vec<String> {
        self.inner.nodes().iter().map(|n| n.id.to_string()).collect()
    }

    fn component_type(&self, part: &str) -> PyResult<String> {
        Ok(self.inner.node(self.index(part)?).component_type.clone())
    }

    fn count(&self, relation: &str) -> PyResult<usize> {
        Ok(relations(relation)?.iter().map(|&r| self.inner.count(r)).sum())
    }

    #[pyo3(signature = (min_freq=2))]
    fn stats(&self, min_freq: usize) -> HashMap<&'static str, usize> {
        let s = graph_stats(&self.inner, min_freq);
        HashMap::from([
            ("configurations", s.configurations),
            ("entities", s.entities),
            ("entity_types", s.entity_types),
            ("relation_types", s.relation_types),
            ("connected_to_triples", s.connected_to_triples),
            ("similar_to_triples", s.similar_to_triples),
            ("node_features", s.node_features),
        ])
    }

    /// `(edge homophily, class-insensitive homophily)` over `"connectedTo"`,
    /// `"similarTo"` or `"all"` edges.
    #[pyo3(signature = (relation="all"))]
    fn homophily(&self, relation: &str) -> PyResult<(f64, f64)> {
        let r = homophily_report(&self.inner, &relations(relation)?).map_err(err)?;
        Ok((r.edge_homophily, r.class_insensitive))
    }

    /// Jaccard similarity of two parts' metadata pairs.
    fn jaccard(&self, a: &str, b: &str) -> PyResult<f64> {
        Ok(jaccard_nodes(self.inner.node(self.index(a)?), self.inner.node(self.index(b)?)))
    }

    fn __repr__(&self) -> String {
        format!(
            "Graph(nodes={}, connectedTo={}, similarTo={})",
            self.inner.num_nodes(),
            self.inner.count(RelationKind::ConnectedTo),
            self.inner.count(RelationKind::SimilarTo)
        )
    }
}

/// Split and feature embeddings for one graph, ready to run replicas.
#[pyclass(name = "Experiment", module = "mkg", frozen)]
struct PyExperiment {
    graph: Py<PyGraph>,
    config: ExperimentConfig,
    split: TripleSplit,
    features: mkg_core::linalg::Matrix,
}

fn parse_strategy(name: &str) -> PyResult<NegativeStrategy> {
    match name {
        "random" => Ok(NegativeStrategy::Random),
        "biased" => Ok(NegativeStrategy::biased()),
        other => Err(PyValueError::new_err(format!("unknown strategy {other:?} (random or biased)"))),
    }
}

#[pymethods]
impl PyExperiment {
    /// `config` is a JSON object with any of `split_ratios`, `split_seed`,
    /// `min_freq`, `pca_dim`, `train` and `finetune`; omitted fields keep
    /// their defaults.
    #[new]
    #[pyo3(signature = (graph, config=None))]
    fn new(graph: Py<PyGraph>, config: Option<&str>) -> PyResult<Self> {
        let config: ExperimentConfig = match config {
            Some(s) => serde_json::from_str(s).map_err(|e| PyValueError::new_err(format!("invalid config: {e}")))?,
            None => ExperimentConfig::default(),
        };
        config.validate().map_err(err)?;
        let (split, features) = {
            let g = &graph.get().inner;
            let split = config.split(g).map_err(err)?;
            (split, embed_features(g, config.min_freq, config.pca_dim).map_err(err)?.embeddings)
        };
        Ok(Self {
            graph,
            config,
            split,
            features,
        })
    }

    /// Effective configuration as JSON.
    fn config(&self) -> String {
        serde_json::to_string(&self.config).expect("config serializes")
    }

    /// Sizes of the train, validation and test similarTo splits.
    fn split_sizes(&self) -> (usize, usize, usize) {
        let g = &self.graph.get().inner;
        (self.split.train_similar(g).len(), self.split.valid.len(), self.split.test.len())
    }

    /// Trains topology embeddings for `seed`, then fine-tunes once per strategy.
    #[pyo3(signature = (seed=0, strategies=vec!["random".to_string(), "biased".to_string()]))]
    fn run(&self, py: Python<'_>, seed: u64, strategies: Vec<String>) -> PyResult<PyReplica> {
        let parsed = strategies.iter().map(|s| parse_strategy(s)).collect::<PyResult<Vec<_>>>()?;
        let g = &self.graph.get().inner;
        let outcome = run_replica(g, &self.split, &self.features, &self.config, seed, &parsed).map_err(err)?;
        Ok(PyReplica {
            graph: self.graph.clone_ref(py),
            outcome,
        })
    }
}

/// Results of one seed: topology-only and per-strategy ensemble models.
#[pyclass(name = "Replica", module = "mkg", frozen)]
struct PyReplica {
    graph: Py<PyGraph>,
    outcome: ReplicaOutcome,
}

impl PyReplica {
    fn ensemble(&self, strategy: &str) -> PyResult<&EnsembleOutcome> {
        self.outcome
            .ensembles
            .iter()
            .find(|e| e.strategy.name() == strategy)
            .ok_or_else(|| PyKeyError::new_err(format!("no {strategy:?} ensemble in this replica")))
    }
}

#[pymethods]
impl PyReplica {
    #[getter]
    fn seed(&self) -> u64 {
        self.outcome.seed
    }

    #[getter]
    fn stage1_losses(&self) -> Vec<f64> {
        self.outcome.stage1_losses.clone()
    }

    /// Filtered test metrics of the topology embeddings alone.
    fn topology_metrics(&self) -> HashMap<&'static str, f64> {
        metrics_dict(&self.outcome.topology_test.overall)
    }

    /// Filtered test metrics of the fine-tuned ensemble.
    fn test_metrics(&self, strategy: &str) -> PyResult<HashMap<&'static str, f64>> {
        Ok(metrics_dict(&self.ensemble(strategy)?.test.overall))
    }

    fn best_epoch(&self, strategy: &str) -> PyResult<usize> {
        Ok(self.ensemble(strategy)?.finetune.best_epoch)
    }

    /// `(epoch, validation MRR)` points of the fine-tuning run.
    fn validation_curve(&self, strategy: &str) -> PyResult<Vec<(usize, f64)>> {
        Ok(self.ensemble(strategy)?.finetune.curve.iter().map(|p| (p.epoch, p.valid_mrr)).collect())
    }

    /// Substitution probability for `(a, similarTo, b)`.
    fn score(&self, strategy: &str, a: &str, b: &str) -> PyResult<f64> {
        let g = self.graph.get();
        let (u, v) = (g.index(a)?, g.index(b)?);
        let m = &self.ensemble(strategy)?.finetune.model;
        let e = m.fused.relations.row(RelationKind::SimilarTo.index());
        score_g(&m.scorer, m.fused.entities.row(u), e, m.fused.entities.row(v)).map_err(err)
    }

    /// Top-`k` parts by cosine similarity of fused embeddings.
    #[pyo3(signature = (strategy, part, k=3))]
    fn neighbors(&self, strategy: &str, part: &str, k: usize) -> PyResult<Vec<(String, f64)>> {
        let g = self.graph.get();
        let q = g.index(part)?;
        let emb = &self.ensemble(strategy)?.finetune.model.fused.entities;
        Ok(nearest_neighbors(emb, q, k)
            .map_err(err)?
            .into_iter()
            .map(|(j, c)| (g.inner.node(j).id.to_string(), c))
            .collect())
    }
}

#[pymodule]
fn mkg(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("MkgError", m.py().get_type::<MkgException>())?;
    m.add_function(wrap_pyfunction!(normalize_part_id, m)?)?;
    m.add_function(wrap_pyfunction!(metrics, m)?)?;
    m.add_class::<PyGraph>()?;
    m.add_class::<PyExperiment>()?;
    m.add_class::<PyReplica>()?;
    Ok(())
}
