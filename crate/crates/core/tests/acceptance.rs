//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

mod common;

use std::collections::HashMap;
use std::process::ExitCode;
use std::time::Instant;

use common::checks::*;
use mkg_core::checkpoint::{embeddings_checkpoint, ensemble_checkpoint, EmbeddingMeta, EnsembleMeta};
use mkg_core::eval::{compute_metrics, mean_std, nearest_neighbors, RunInfo};
use mkg_core::finetune::{finetune, CurvePoint, FinetuneConfig};
use mkg_core::graph::MachineKnowledgeGraph;
use mkg_core::homophily::homophily_report;
use mkg_core::linalg::Matrix;
use mkg_core::negatives::NegativeStrategy;
use mkg_core::pca::fit_pca;
use mkg_core::pipeline::{embed_features, evaluate_test, init_ensemble, run_replica, ExperimentConfig, ReplicaOutcome};
use mkg_core::split::TripleSplit;
use mkg_core::synth::{generate, SynthConfig};
use mkg_core::RelationKind;

const SEEDS: [u64; 5] = [0, 1, 2, 3, 4];

struct Report {
    failures: usize,
}

impl Report {
    fn record(&mut self, id: &str, ok: bool, detail: String) {
        if !ok {
            self.failures += 1;
        }
        println!("{} criterion {id}: {detail}", if ok { "PASS" } else { "FAIL" });
    }
}

fn secs(start: Instant) -> f64 {
    start.elapsed().as_secs_f64()
}

fn score_functions(rep: &mut Report) {
    let t = Instant::now();
    let worst = score_oracle_worst(1, 1000);
    let el = secs(t);
    rep.record("1", worst < 1e-10 && el < 1.0, format!("worst relative error {worst:.2e}, {el:.3}s"));
}

fn gradients(rep: &mut Report) {
    let t = Instant::now();
    let stage1 = stage1_fd_worst(7, 100);
    let ft = finetune_fd_worst(8, 100);
    let el = secs(t);
    let worst = ft.iter().copied().fold(stage1, f64::max);
    let groups: Vec<String> = FINETUNE_PARAMS.iter().zip(ft).map(|(n, w)| format!("{n} {w:.1e}")).collect();
    rep.record(
        "2",
        worst < 1e-4 && el < 30.0,
        format!("stage-1 {stage1:.1e}; fine-tune {}; {el:.2}s", groups.join(", ")),
    );
}

fn pca(rep: &mut Report) {
    let t = Instant::now();
    let data = rank_five_data(3);
    let explained: f64 = fit_pca(&data, 5).unwrap().explained_variance_ratio.iter().sum();
    let dev = pca_oracle_deviation(&data, 5);
    let el = secs(t);
    rep.record(
        "3",
        explained >= 0.9999 && dev < 1e-8 && el < 5.0,
        format!("explained {explained:.6}, oracle deviation {dev:.2e}, {el:.3}s"),
    );
}

fn metrics(rep: &mut Report) {
    let t = Instant::now();
    let m = compute_metrics(&[1.0, 2.0, 4.0]).unwrap();
    let exact = m.mr == 7.0 / 3.0 && m.mrr == 7.0 / 12.0 && (m.hits1, m.hits3, m.hits10) == (1.0 / 3.0, 2.0 / 3.0, 1.0);
    let (mismatch, worse) = filtered_rank_mismatches(5, 10_000);
    let el = secs(t);
    rep.record(
        "4",
        exact && mismatch == 0 && worse == 0 && el < 10.0,
        format!(
            "MR {:.4} MRR {:.4} Hits {:.4}/{:.4}/{:.4}; {mismatch} oracle mismatches in 10^4 cases; {el:.2}s",
            m.mr, m.mrr, m.hits1, m.hits3, m.hits10
        ),
    );
}

fn homophily(rep: &mut Report, g: &MachineKnowledgeGraph) {
    let ct = homophily_report(g, &[RelationKind::ConnectedTo]).unwrap();
    let all = homophily_report(g, &RelationKind::ALL).unwrap();
    let row_err = [&ct, &all]
        .iter()
        .flat_map(|r| {
            r.compatibility
                .row_sums()
                .into_iter()
                .enumerate()
                .filter(|(k, _)| !r.compatibility.empty_rows.contains(k))
                .map(|(_, s)| (s - 1.0).abs())
                .collect::<Vec<_>>()
        })
        .fold(0.0, f64::max);
    rep.record(
        "5",
        ct.edge_homophily == 0.0
            && all.edge_homophily > ct.edge_homophily
            && all.class_insensitive > ct.class_insensitive
            && row_err <= 1e-9,
        format!(
            "edge homophily {:.4} -> {:.4}, class-insensitive {:.4} -> {:.4}, row-sum error {row_err:.1e}",
            ct.edge_homophily, all.edge_homophily, ct.class_insensitive, all.class_insensitive
        ),
    );
}

fn value_at(curve: &[CurvePoint], epoch: usize) -> f64 {
    // A run that stopped earlier keeps its last value.
    curve.iter().take_while(|p| p.epoch <= epoch).last().map(|p| p.valid_mrr).unwrap_or(f64::NAN)
}

fn trends(rep: &mut Report, replicas: &[ReplicaOutcome], elapsed: f64) {
    let topo: Vec<f64> = replicas.iter().map(|r| r.topology_test.overall.mrr).collect();
    let random: Vec<f64> = replicas.iter().map(|r| r.ensembles[0].test.overall.mrr).collect();
    let biased: Vec<f64> = replicas.iter().map(|r| r.ensembles[1].test.overall.mrr).collect();
    let (t, r, b) = (mean_std(&topo), mean_std(&random), mean_std(&biased));
    let fmt = |m: &mkg_core::eval::MeanStd| format!("{:.4} ± {:.4}", m.mean, m.std);
    rep.record(
        "6a",
        r.mean > t.mean && elapsed < 900.0,
        format!("ensemble test MRR {} vs topology-only {}; {elapsed:.0}s", fmt(&r), fmt(&t)),
    );
    rep.record("6b", b.mean >= r.mean, format!("biased test MRR {} vs random {}", fmt(&b), fmt(&r)));

    let mut at_stop = (Vec::new(), Vec::new());
    let mut epochs = Vec::new();
    for rep in replicas {
        let (rnd, bia) = (&rep.ensembles[0].finetune, &rep.ensembles[1].finetune);
        let e = bia.best_epoch;
        epochs.push(e.to_string());
        at_stop.0.push(value_at(&bia.curve, e));
        at_stop.1.push(value_at(&rnd.curve, e));
    }
    let (vb, vr) = (mean_std(&at_stop.0).mean, mean_std(&at_stop.1).mean);
    rep.record(
        "7",
        vb >= vr,
        format!(
            "validation MRR at biased early-stop epochs [{}]: biased {vb:.4} vs random {vr:.4}",
            epochs.join(", ")
        ),
    );
}

fn k_sweep(
    rep: &mut Report,
    g: &MachineKnowledgeGraph,
    split: &TripleSplit,
    features: &Matrix,
    first: &ReplicaOutcome,
    cfg: &ExperimentConfig,
) {
    let mut rows = Vec::new();
    for k in 1..=10 {
        let ft = FinetuneConfig {
            negatives: k,
            seed: first.seed,
            strategy: NegativeStrategy::biased(),
            ..cfg.finetune.clone()
        };
        let model = init_ensemble(&first.topology, features, &ft).unwrap();
        let r = finetune(g, split, model, &ft).unwrap();
        let run = RunInfo {
            model: "distmult-ensemble".into(),
            strategy: "biased".into(),
            seed: first.seed,
        };
        let test = evaluate_test(&r.model, g, split, run).unwrap();
        println!("    K={k:2}  test MRR {:.4}  best epoch {}", test.overall.mrr, r.best_epoch);
        rows.push((k, test.overall.mrr));
    }
    let mut sorted = rows.clone();
    sorted.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let place = sorted.iter().position(|&(k, _)| k == 5).unwrap() + 1;
    rep.record("8", place <= 3, format!("K=5 ranks {place} of 10 in the MRR-vs-K sweep"));
}

fn neighbors(rep: &mut Report, families: &[Vec<usize>], replicas: &[ReplicaOutcome]) {
    let family_of: HashMap<usize, usize> = families.iter().enumerate().flat_map(|(f, m)| m.iter().map(move |&i| (i, f))).collect();
    let mut rates = Vec::new();
    for r in replicas {
        let emb = &r.ensembles[1].finetune.model.fused.entities;
        let hits = family_of
            .iter()
            .filter(|&(&i, &f)| {
                nearest_neighbors(emb, i, 3).unwrap().iter().any(|&(j, _)| family_of.get(&j) == Some(&f))
            })
            .count();
        rates.push(hits as f64 / family_of.len() as f64);
    }
    let m = mean_std(&rates).mean;
    rep.record(
        "9",
        m >= 0.8,
        format!(
            "{:.1}% of {} family members have a family peer in their top-3 (per seed: {})",
            100.0 * m,
            family_of.len(),
            rates.iter().map(|x| format!("{:.3}", x)).collect::<Vec<_>>().join(", ")
        ),
    );
}

fn artifacts(g: &MachineKnowledgeGraph, r: &ReplicaOutcome, cfg: &ExperimentConfig) -> (Vec<u8>, Vec<u8>, String) {
    let mut emb = Vec::new();
    embeddings_checkpoint(
        &r.topology,
        &EmbeddingMeta {
            model: cfg.train.model,
            dim: cfg.train.dim,
            epoch: cfg.train.max_epochs,
            seed: r.seed,
            graph_fingerprint: g.fingerprint(),
        },
    )
    .unwrap()
    .write_to(&mut emb)
    .unwrap();
    let mut ens = Vec::new();
    let e = &r.ensembles[1];
    ensemble_checkpoint(
        &e.finetune.model,
        &EnsembleMeta {
            topology_model: cfg.train.model,
            topology_width: e.finetune.model.fused.topology_width,
            feature_width: e.finetune.model.fused.feature_width,
            use_bias: e.finetune.model.scorer.use_bias,
            best_epoch: e.finetune.best_epoch,
            best_valid_mrr: e.finetune.best_valid_mrr,
            config: FinetuneConfig { seed: r.seed, strategy: e.strategy, ..cfg.finetune.clone() },
            graph_fingerprint: g.fingerprint(),
        },
    )
    .unwrap()
    .write_to(&mut ens)
    .unwrap();
    let reports = [&r.topology_test, &r.ensembles[0].test, &r.ensembles[1].test];
    (emb, ens, serde_json::to_string(&reports).unwrap())
}

fn main() -> ExitCode {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    pool.install(|| {
        let mut rep = Report { failures: 0 };
        score_functions(&mut rep);
        gradients(&mut rep);
        pca(&mut rep);
        metrics(&mut rep);

        let corpus = generate(&SynthConfig::desk()).unwrap();
        let g = corpus.build_graph().unwrap();
        homophily(&mut rep, &g);

        let cfg = ExperimentConfig::default();
        let split = cfg.split(&g).unwrap();
        let features = embed_features(&g, cfg.min_freq, cfg.pca_dim).unwrap().embeddings;
        let strategies = [NegativeStrategy::Random, NegativeStrategy::biased()];
        let start = Instant::now();
        let replicas: Vec<ReplicaOutcome> = SEEDS
            .iter()
            .map(|&s| {
                let t = Instant::now();
                let r = run_replica(&g, &split, &features, &cfg, s, &strategies).unwrap();
                println!(
                    "    seed {s}: topology {:.4}, random {:.4} (epoch {}), biased {:.4} (epoch {}), {:.0}s",
                    r.topology_test.overall.mrr,
                    r.ensembles[0].test.overall.mrr,
                    r.ensembles[0].finetune.best_epoch,
                    r.ensembles[1].test.overall.mrr,
                    r.ensembles[1].finetune.best_epoch,
                    secs(t)
                );
                r
            })
            .collect();
        trends(&mut rep, &replicas, secs(start));
        k_sweep(&mut rep, &g, &split, &features, &replicas[0], &cfg);

        let families: Vec<Vec<usize>> = corpus
            .families
            .iter()
            .map(|f| f.iter().map(|id| g.index_of(id).unwrap()).collect())
            .collect();
        neighbors(&mut rep, &families, &replicas);

        let again = run_replica(&g, &split, &features, &cfg, SEEDS[0], &strategies).unwrap();
        let (a, b) = (artifacts(&g, &replicas[0], &cfg), artifacts(&g, &again, &cfg));
        rep.record(
            "10",
            a == b,
            format!(
                "embedding checkpoint {} bytes, ensemble checkpoint {} bytes, metric JSON {} bytes; identical: {}",
                a.0.len(),
                a.1.len(),
                a.2.len(),
                a == b
            ),
        );

        println!("{} of 11 checks failed", rep.failures);
        if rep.failures == 0 { ExitCode::SUCCESS } else { ExitCode::FAILURE }
    })
}
