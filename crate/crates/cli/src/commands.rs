//! One function per subcommand. Each reads its inputs from the work dir,
//! writes its artifacts there and records a run manifest.

use std::collections::HashMap;

use anyhow::{bail, Context, Result};
use mkg_core::checkpoint::{
    embeddings_checkpoint, embeddings_from_checkpoint, ensemble_checkpoint, ensemble_from_checkpoint,
    projection_checkpoint, Checkpoint, EmbeddingMeta, EnsembleMeta,
};
use mkg_core::eval::{mean_std, nearest_neighbors, summary_table, Metrics, RankingReport, RunInfo};
use mkg_core::finetune::{finetune, FinetuneConfig};
use mkg_core::graph::{graph_stats, normalize_part_id, MachineKnowledgeGraph};
use mkg_core::homophily::homophily_report;
use mkg_core::io::{self, SplitManifest};
use mkg_core::kge::{EmbeddingTable, ModelKind};
use mkg_core::linalg::Matrix;
use mkg_core::pipeline::{embed_features, evaluate_test, init_ensemble, run_replica};
use mkg_core::projection::{cluster_separation, project_2d};
use mkg_core::split::TripleSplit;
use mkg_core::synth::generate;
use mkg_core::train::train_stage1;
use mkg_core::RelationKind;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::config::{PipelineConfig, StrategyName};
use crate::workdir::*;

pub struct Ctx {
    pub cfg: PipelineConfig,
    pub work: WorkDir,
}

/// The graph from the configured input files, plus those files for the manifest.
fn load_graph(ctx: &Ctx, run: &mut Run) -> Result<MachineKnowledgeGraph> {
    let (nodes, edges, pairs) = (ctx.work.nodes(&ctx.cfg), ctx.work.edges(&ctx.cfg), ctx.work.pairs(&ctx.cfg));
    require(&nodes, "mkg synth")?;
    require(&edges, "mkg synth")?;
    let pairs = pairs.is_file().then_some(pairs);
    let g = io::load_graph(&nodes, &edges, pairs.as_deref(), false)
        .with_context(|| format!("loading graph from {}", nodes.display()))?;
    run.input(nodes);
    run.input(edges);
    if let Some(p) = pairs {
        run.input(p);
    }
    Ok(g)
}

fn load_split(ctx: &Ctx, g: &MachineKnowledgeGraph, run: &mut Run) -> Result<TripleSplit> {
    let path = ctx.work.path(SPLIT);
    require(&path, "mkg build")?;
    let manifest: SplitManifest = io::read_json(&path)?;
    let split = manifest
        .split_for(g)
        .context("split.json does not match the current graph; rerun `mkg build`")?
        .clone();
    run.input(path);
    Ok(split)
}

fn load_features(ctx: &Ctx, g: &MachineKnowledgeGraph, run: &mut Run) -> Result<Matrix> {
    let path = ctx.work.path(FEATURES);
    require(&path, "mkg encode")?;
    let (ids, m) = io::read_matrix_csv(std::fs::File::open(&path)?)?;
    if ids.len() != g.num_nodes() || ids.iter().zip(g.nodes()).any(|(a, n)| a != &n.id) {
        bail!("{} was encoded for a different graph; rerun `mkg encode`", path.display());
    }
    run.input(path);
    Ok(m)
}

fn load_topology(ctx: &Ctx, model: ModelKind, g: &MachineKnowledgeGraph, run: &mut Run) -> Result<EmbeddingTable> {
    let path = ctx.work.embeddings(model);
    require(&path, &format!("mkg train --model {model}"))?;
    let (table, meta) = embeddings_from_checkpoint(Checkpoint::load(&path)?)?;
    if meta.graph_fingerprint != g.fingerprint() {
        bail!("{} was trained on a different graph; rerun `mkg train`", path.display());
    }
    run.input(path);
    Ok(table)
}

fn load_ensemble(
    ctx: &Ctx,
    model: ModelKind,
    strategy: StrategyName,
    g: &MachineKnowledgeGraph,
    run: &mut Run,
) -> Result<mkg_core::ensemble::EnsembleModel> {
    let path = ctx.work.ensemble(model, strategy);
    require(
        &path,
        &format!("mkg finetune --model {model} --strategy {}", strategy_name(strategy)),
    )?;
    let (m, meta) = ensemble_from_checkpoint(Checkpoint::load(&path)?)?;
    if meta.graph_fingerprint != g.fingerprint() {
        bail!("{} was fine-tuned on a different graph; rerun `mkg finetune`", path.display());
    }
    run.input(path);
    Ok(m)
}

pub fn synth(ctx: &Ctx) -> Result<()> {
    let mut run = Run::start("synth");
    let corpus = generate(&ctx.cfg.synth)?;
    corpus.write(&ctx.work.root)?;
    for name in [NODES, EDGES, PAIRS, "provenance.json"] {
        run.output(ctx.work.path(name));
    }
    println!(
        "synth: {} nodes, {} edges, {} substitute pairs, {} machines -> {}",
        corpus.nodes.len(),
        corpus.edges.len(),
        corpus.pairs().len(),
        corpus.boms.len(),
        ctx.work.root.display()
    );
    run.finish(&ctx.work, &ctx.cfg)?;
    Ok(())
}

pub fn build(ctx: &Ctx) -> Result<()> {
    let mut run = Run::start("build");
    let g = load_graph(ctx, &mut run)?;
    let exp = ctx.cfg.experiment();
    let split = exp.split(&g)?;
    let manifest = SplitManifest {
        graph_fingerprint: g.fingerprint(),
        ratios: exp.split_ratios,
        split,
    };
    let stats = graph_stats(&g, ctx.cfg.features.min_freq);
    io::write_json(&ctx.work.path(SPLIT), &manifest)?;
    io::write_json(&ctx.work.path(STATS), &json!({ "fingerprint": g.fingerprint(), "stats": stats }))?;
    run.output(ctx.work.path(SPLIT));
    run.output(ctx.work.path(STATS));
    println!(
        "build: {} entities, {} types, {} connectedTo, {} similarTo ({} / {} / {} train / valid / test)",
        stats.entities,
        stats.entity_types,
        stats.connected_to_triples,
        stats.similar_to_triples,
        manifest.split.train.len() - stats.connected_to_triples,
        manifest.split.valid.len(),
        manifest.split.test.len()
    );
    run.finish(&ctx.work, &ctx.cfg)?;
    Ok(())
}

pub fn encode(ctx: &Ctx) -> Result<()> {
    let mut run = Run::start("encode");
    let g = load_graph(ctx, &mut run)?;
    let f = embed_features(&g, ctx.cfg.features.min_freq, ctx.cfg.features.pca_dim)?;
    let ids: Vec<_> = g.nodes().iter().map(|n| n.id.clone()).collect();
    io::write_matrix_csv_file(&ctx.work.path(FEATURES), &ids, "pc", &f.embeddings)?;
    io::write_json(&ctx.work.path(VOCABULARY), &f.vocabulary)?;
    projection_checkpoint(&f.projection, ctx.cfg.features.min_freq).save(&ctx.work.path(PROJECTION))?;
    for name in [FEATURES, VOCABULARY, PROJECTION] {
        run.output(ctx.work.path(name));
    }
    let kept: f64 = f.projection.explained_variance_ratio.iter().sum();
    println!(
        "encode: {} attribute columns -> {} components ({:.1}% of variance)",
        f.vocabulary.num_columns(),
        f.projection.output_dim(),
        100.0 * kept
    );
    run.finish(&ctx.work, &ctx.cfg)?;
    Ok(())
}

pub fn train(ctx: &Ctx) -> Result<()> {
    let mut run = Run::start("train");
    let g = load_graph(ctx, &mut run)?;
    let split = load_split(ctx, &g, &mut run)?;
    let cfg = &ctx.cfg.train;
    let r = train_stage1(&g, &split, cfg)?;
    let meta = EmbeddingMeta {
        model: cfg.model,
        dim: cfg.dim,
        epoch: cfg.max_epochs,
        seed: cfg.seed,
        graph_fingerprint: g.fingerprint(),
    };
    let path = ctx.work.embeddings(cfg.model);
    embeddings_checkpoint(&r.table, &meta)?.save(&path)?;
    let log_path = ctx.work.train_log(cfg.model);
    io::write_json(&log_path, &json!({ "meta": meta, "epoch_losses": r.epoch_losses }))?;
    run.output(path.clone());
    run.output(log_path);
    println!(
        "train: {} dim {} for {} epochs, final loss {:.5} -> {}",
        cfg.model,
        cfg.dim,
        cfg.max_epochs,
        r.epoch_losses.last().copied().unwrap_or(f64::NAN),
        path.display()
    );
    run.finish(&ctx.work, &ctx.cfg)?;
    Ok(())
}

pub fn finetune_cmd(ctx: &Ctx) -> Result<()> {
    let mut run = Run::start("finetune");
    let g = load_graph(ctx, &mut run)?;
    let split = load_split(ctx, &g, &mut run)?;
    let features = load_features(ctx, &g, &mut run)?;
    let model_kind = ctx.cfg.train.model;
    let topology = load_topology(ctx, model_kind, &g, &mut run)?;
    let cfg = &ctx.cfg.finetune;
    let model = init_ensemble(&topology, &features, cfg)?;
    let r = finetune(&g, &split, model, cfg)?;
    let meta = EnsembleMeta {
        topology_model: model_kind,
        topology_width: r.model.fused.topology_width,
        feature_width: r.model.fused.feature_width,
        use_bias: r.model.scorer.use_bias,
        best_epoch: r.best_epoch,
        best_valid_mrr: r.best_valid_mrr,
        config: cfg.clone(),
        graph_fingerprint: g.fingerprint(),
    };
    let strategy = ctx.cfg.negatives.strategy;
    let path = ctx.work.ensemble(model_kind, strategy);
    ensemble_checkpoint(&r.model, &meta)?.save(&path)?;
    let log_path = ctx.work.finetune_log(model_kind, strategy);
    io::write_json(&log_path, &json!({ "meta": meta, "curve": r.curve }))?;
    run.output(path.clone());
    run.output(log_path);
    println!(
        "finetune: {model_kind} + {} negatives, best validation MRR {:.4} at epoch {} -> {}",
        strategy_name(strategy),
        r.best_valid_mrr,
        r.best_epoch,
        path.display()
    );
    run.finish(&ctx.work, &ctx.cfg)?;
    Ok(())
}

#[derive(Serialize)]
struct EvalRow {
    name: String,
    model: ModelKind,
    strategy: Option<String>,
    runs: Vec<RankingReport>,
    best_epochs: Vec<usize>,
}

#[derive(Serialize)]
struct SweepRow {
    strategy: String,
    negatives: usize,
    test_mrr: Vec<f64>,
    mean_mrr: f64,
}

pub struct EvalOptions {
    pub seeds: Option<usize>,
    pub models: Vec<ModelKind>,
    pub strategies: Vec<StrategyName>,
    pub k_sweep: bool,
}

fn metrics_of(reports: &[RankingReport]) -> Vec<Metrics> {
    reports.iter().map(|r| r.overall).collect()
}

pub fn eval(ctx: &Ctx, opts: &EvalOptions) -> Result<()> {
    let mut run = Run::start("eval");
    let g = load_graph(ctx, &mut run)?;
    let split = load_split(ctx, &g, &mut run)?;
    let Some(n) = opts.seeds else {
        return eval_artifacts(ctx, &g, &split, opts, run);
    };
    if n == 0 {
        bail!("--seeds must be at least 1");
    }
    let features = load_features(ctx, &g, &mut run)?;
    let exp = ctx.cfg.experiment();
    let seeds: Vec<u64> = (0..n as u64).map(|i| ctx.cfg.seed + i).collect();
    let strategies: Vec<_> = opts.strategies.iter().map(|&s| ctx.cfg.negatives.resolve(s)).collect();

    let mut rows = Vec::new();
    let mut sweep = Vec::new();
    for &model in &opts.models {
        let exp = mkg_core::pipeline::ExperimentConfig {
            train: mkg_core::train::TrainConfig { model, ..exp.train.clone() },
            ..exp.clone()
        };
        let replicas = seeds
            .par_iter()
            .map(|&s| run_replica(&g, &split, &features, &exp, s, &strategies))
            .collect::<mkg_core::Result<Vec<_>>>()?;
        rows.push(EvalRow {
            name: model.to_string(),
            model,
            strategy: None,
            runs: replicas.iter().map(|r| r.topology_test.clone()).collect(),
            best_epochs: Vec::new(),
        });
        for (i, &s) in opts.strategies.iter().enumerate() {
            let suffix = if s == StrategyName::Biased { " (biased)" } else { "" };
            rows.push(EvalRow {
                name: format!("{model}-ensemble{suffix}"),
                model,
                strategy: Some(strategy_name(s).into()),
                runs: replicas.iter().map(|r| r.ensembles[i].test.clone()).collect(),
                best_epochs: replicas.iter().map(|r| r.ensembles[i].finetune.best_epoch).collect(),
            });
        }
        if opts.k_sweep {
            for (&name, &strategy) in opts.strategies.iter().zip(&strategies) {
                for k in 1..=10 {
                    let test_mrr = replicas
                        .par_iter()
                        .map(|r| {
                            let cfg = FinetuneConfig {
                                negatives: k,
                                seed: r.seed,
                                strategy,
                                ..exp.finetune.clone()
                            };
                            let m = init_ensemble(&r.topology, &features, &cfg)?;
                            let res = finetune(&g, &split, m, &cfg)?;
                            let info = RunInfo {
                                model: format!("{model}-ensemble"),
                                strategy: strategy_name(name).into(),
                                seed: r.seed,
                            };
                            Ok(evaluate_test(&res.model, &g, &split, info)?.overall.mrr)
                        })
                        .collect::<mkg_core::Result<Vec<f64>>>()?;
                    let mean_mrr = mean_std(&test_mrr).mean;
                    log::info!("{model} {} K={k}: test MRR {mean_mrr:.4}", strategy_name(name));
                    sweep.push(SweepRow {
                        strategy: format!("{model}/{}", strategy_name(name)),
                        negatives: k,
                        test_mrr,
                        mean_mrr,
                    });
                }
            }
        }
    }

    let table_rows: Vec<(String, Vec<Metrics>)> = rows.iter().map(|r| (r.name.clone(), metrics_of(&r.runs))).collect();
    let mut table = format!("Filtered test metrics over {n} seed(s), mean ± std\n");
    table.push_str(&summary_table(&table_rows));
    if opts.k_sweep {
        table.push_str("\nTest MRR vs negatives per positive (K)\n");
        let mut groups: Vec<&str> = sweep.iter().map(|r| r.strategy.as_str()).collect();
        groups.dedup();
        table.push_str(&format!("{:>3}", "K"));
        for gname in &groups {
            table.push_str(&format!("  {gname:>18}"));
        }
        table.push('\n');
        for k in 1..=10 {
            table.push_str(&format!("{k:>3}"));
            for gname in &groups {
                let row = sweep.iter().find(|r| r.strategy == *gname && r.negatives == k).unwrap();
                table.push_str(&format!("  {:>18.4}", row.mean_mrr));
            }
            table.push('\n');
        }
        io::write_json(&ctx.work.path(K_SWEEP), &sweep)?;
        run.output(ctx.work.path(K_SWEEP));
    }
    print!("{table}");
    io::write_json(&ctx.work.path(EVAL_REPORT), &json!({ "seeds": seeds, "rows": rows }))?;
    std::fs::write(ctx.work.path(EVAL_TABLE), &table)?;
    run.output(ctx.work.path(EVAL_REPORT));
    run.output(ctx.work.path(EVAL_TABLE));
    run.finish(&ctx.work, &ctx.cfg)?;
    Ok(())
}

/// Ranks the test split with checkpoints already in the work dir.
fn eval_artifacts(
    ctx: &Ctx,
    g: &MachineKnowledgeGraph,
    split: &TripleSplit,
    opts: &EvalOptions,
    mut run: Run,
) -> Result<()> {
    let mut rows = Vec::new();
    for &model in &opts.models {
        let table = load_topology(ctx, model, g, &mut run)?;
        let info = RunInfo {
            model: model.to_string(),
            strategy: "topology".into(),
            seed: ctx.cfg.seed,
        };
        let report = evaluate_test(&table, g, split, info)?;
        let path = ctx.work.metrics(model, None);
        io::write_json(&path, &report)?;
        run.output(path);
        rows.push((model.to_string(), vec![report.overall]));
        for &s in &opts.strategies {
            let ens = load_ensemble(ctx, model, s, g, &mut run)?;
            let info = RunInfo {
                model: format!("{model}-ensemble"),
                strategy: strategy_name(s).into(),
                seed: ctx.cfg.seed,
            };
            let report = evaluate_test(&ens, g, split, info)?;
            let path = ctx.work.metrics(model, Some(s));
            io::write_json(&path, &report)?;
            run.output(path);
            rows.push((format!("{model}-ensemble ({})", strategy_name(s)), vec![report.overall]));
        }
    }
    print!("{}", summary_table(&rows));
    run.finish(&ctx.work, &ctx.cfg)?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Source {
    Ensemble,
    Topology,
    Features,
}

fn source_embeddings(ctx: &Ctx, source: Source, g: &MachineKnowledgeGraph, run: &mut Run) -> Result<Matrix> {
    let model = ctx.cfg.train.model;
    Ok(match source {
        Source::Features => load_features(ctx, g, run)?,
        Source::Topology => load_topology(ctx, model, g, run)?.entities,
        Source::Ensemble => load_ensemble(ctx, model, ctx.cfg.negatives.strategy, g, run)?.fused.entities,
    })
}

fn source_name(source: Source) -> &'static str {
    match source {
        Source::Ensemble => "ensemble",
        Source::Topology => "topology",
        Source::Features => "features",
    }
}

#[derive(Serialize)]
struct Neighbor {
    rank: usize,
    id: String,
    component_type: String,
    cosine: f64,
    known_substitute: bool,
}

pub fn neighbors(ctx: &Ctx, part: &str, k: usize, source: Source) -> Result<()> {
    let mut run = Run::start("neighbors");
    let g = load_graph(ctx, &mut run)?;
    let id = normalize_part_id(part)?;
    let q = g.resolve(&id)?;
    let emb = source_embeddings(ctx, source, &g, &mut run)?;
    let subs: Vec<usize> = g
        .successors(q, RelationKind::SimilarTo)
        .iter()
        .chain(g.predecessors(q, RelationKind::SimilarTo))
        .copied()
        .collect();
    let list: Vec<Neighbor> = nearest_neighbors(&emb, q, k)?
        .into_iter()
        .enumerate()
        .map(|(r, (j, cosine))| Neighbor {
            rank: r + 1,
            id: g.node(j).id.to_string(),
            component_type: g.node(j).component_type.clone(),
            cosine,
            known_substitute: subs.contains(&j),
        })
        .collect();
    println!("{} ({}), {} embeddings:", id, g.node(q).component_type, source_name(source));
    for n in &list {
        let mark = if n.known_substitute { "  [substitute]" } else { "" };
        println!("  {}. {:<20} {:<16} {:.4}{mark}", n.rank, n.id, n.component_type, n.cosine);
    }
    let path = ctx.work.path(&format!("neighbors_{}.json", id.as_str().replace(['/', '\\'], "_")));
    io::write_json(
        &path,
        &json!({ "query": id.as_str(), "source": source_name(source), "neighbors": list }),
    )?;
    run.output(path);
    run.finish(&ctx.work, &ctx.cfg)?;
    Ok(())
}

pub fn homophily(ctx: &Ctx) -> Result<()> {
    let mut run = Run::start("homophily");
    let g = load_graph(ctx, &mut run)?;
    let ct = homophily_report(&g, &[RelationKind::ConnectedTo])?;
    let all = homophily_report(&g, &RelationKind::ALL)?;
    println!("{:<22} {:>14} {:>18}", "edges", "edge homophily", "class-insensitive");
    println!("{:<22} {:>14.4} {:>18.4}", "connectedTo", ct.edge_homophily, ct.class_insensitive);
    println!("{:<22} {:>14.4} {:>18.4}", "connectedTo+similarTo", all.edge_homophily, all.class_insensitive);
    let path = ctx.work.path(HOMOPHILY);
    io::write_json(&path, &json!({ "connected_to": ct, "all": all }))?;
    run.output(path);
    run.finish(&ctx.work, &ctx.cfg)?;
    Ok(())
}

pub fn project(ctx: &Ctx, source: Source) -> Result<()> {
    let mut run = Run::start("project");
    let g = load_graph(ctx, &mut run)?;
    let emb = source_embeddings(ctx, source, &g, &mut run)?;
    let coords = project_2d(&emb)?;
    let labels = g.type_labels();
    let sep = cluster_separation(&coords, &labels);
    let path = ctx.work.path(&format!("projection_{}.csv", source_name(source)));
    io::write_projection_csv_file(&path, &g, &coords)?;
    run.output(path.clone());
    let by_type: HashMap<usize, usize> = labels.iter().fold(HashMap::new(), |mut m, &l| {
        *m.entry(l).or_default() += 1;
        m
    });
    println!(
        "project: {} points in {} types, type separation {sep:.4} -> {}",
        coords.rows(),
        by_type.len(),
        path.display()
    );
    run.finish(&ctx.work, &ctx.cfg)?;
    Ok(())
}
