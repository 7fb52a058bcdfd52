use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = r#"
seed = 3
[synth]
machines = 16
leaf_types = 10
leaf_parts = 240
substitute_pairs = 60
[features]
pca_dim = 12
[train]
dim = 8
max_epochs = 3
[finetune]
hidden = 16
max_epochs = 4
"#;

fn mkg(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mkg"))
        .args(args)
        .env("MKG_WORK_DIR", dir)
        .env_remove("RUST_LOG")
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = mkg(dir, args);
    assert!(
        out.status.success(),
        "mkg {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn fail(dir: &Path, args: &[&str]) -> String {
    let out = mkg(dir, args);
    assert!(!out.status.success(), "mkg {args:?} unexpectedly succeeded");
    String::from_utf8(out.stderr).unwrap()
}

fn pipeline(dir: &Path) {
    let cfg = dir.join("mkg.toml");
    std::fs::write(&cfg, SMALL).unwrap();
    let c = cfg.to_str().unwrap();
    for cmd in ["synth", "build", "encode", "train"] {
        ok(dir, &["--config", c, cmd]);
    }
    for s in ["random", "biased"] {
        ok(dir, &["--config", c, "--strategy", s, "finetune"]);
    }
    ok(dir, &["--config", c, "eval", "--strategies", "random,biased"]);
}

#[test]
fn pipeline_is_deterministic() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    pipeline(a.path());
    pipeline(b.path());
    for name in [
        "nodes.jsonl",
        "edges.csv",
        "pairs.csv",
        "split.json",
        "features.csv",
        "projection.mkg",
        "embeddings_distmult.mkg",
        "ensemble_distmult_random.mkg",
        "ensemble_distmult_biased.mkg",
        "metrics_distmult_topology.json",
        "metrics_distmult_random.json",
        "metrics_distmult_biased.json",
    ] {
        let x = std::fs::read(a.path().join(name)).unwrap();
        let y = std::fs::read(b.path().join(name)).unwrap();
        assert!(x == y, "{name} differs between runs");
    }
    let manifest: serde_json::Value =
        serde_json::from_slice(&std::fs::read(a.path().join("manifests/eval.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "eval");
    assert!(manifest["inputs"].as_array().unwrap().iter().all(|f| f["sha256"].as_str().unwrap().len() == 64));
    assert_eq!(manifest["config"]["seed"], 3);
    assert!(manifest["wall_time_secs"].as_f64().unwrap() >= 0.0);

    let out = ok(a.path(), &["homophily"]);
    assert!(out.contains("connectedTo"));
    ok(a.path(), &["--config", a.path().join("mkg.toml").to_str().unwrap(), "project"]);
    let csv = std::fs::read_to_string(a.path().join("projection_ensemble.csv")).unwrap();
    assert!(csv.starts_with("id,type,x,y"));
}

#[test]
fn missing_artifacts_name_the_producer() {
    let dir = tempfile::tempdir().unwrap();
    assert!(fail(dir.path(), &["build"]).contains("mkg synth"));
    std::fs::write(dir.path().join("mkg.toml"), SMALL).unwrap();
    let c = dir.path().join("mkg.toml");
    let c = c.to_str().unwrap();
    ok(dir.path(), &["--config", c, "synth"]);
    assert!(fail(dir.path(), &["--config", c, "train"]).contains("mkg build"));
    ok(dir.path(), &["--config", c, "build"]);
    assert!(fail(dir.path(), &["--config", c, "finetune"]).contains("mkg encode"));
    ok(dir.path(), &["--config", c, "encode"]);
    assert!(fail(dir.path(), &["--config", c, "finetune"]).contains("mkg train --model distmult"));
    assert!(fail(dir.path(), &["--config", c, "--model", "complex", "eval"]).contains("mkg train --model complex"));
    assert!(fail(dir.path(), &["--config", c, "neighbors", "nope"]).contains("NOPE"));
}

#[test]
fn config_errors_name_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "[finetune]\ndropout = 2.0\n").unwrap();
    assert!(fail(dir.path(), &["--config", cfg.to_str().unwrap(), "synth"]).contains("finetune.dropout"));
    std::fs::write(&cfg, "[train]\nlr = 0.1\n").unwrap();
    assert!(fail(dir.path(), &["--config", cfg.to_str().unwrap(), "synth"]).contains("lr"));
    assert!(fail(dir.path(), &["--model", "rescal", "synth"]).contains("rescal"));
}

#[test]
fn multi_seed_eval_and_neighbors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("mkg.toml");
    std::fs::write(&cfg, SMALL).unwrap();
    let c = cfg.to_str().unwrap();
    for cmd in ["synth", "build", "encode"] {
        ok(dir.path(), &["--config", c, cmd]);
    }
    let table = ok(
        dir.path(),
        &["--config", c, "eval", "--seeds", "2", "--models", "distmult,transe", "--strategies", "random,biased"],
    );
    for col in ["MR", "MRR", "Hits@1", "Hits@3", "Hits@10", "±", "transe-ensemble (biased)"] {
        assert!(table.contains(col), "missing {col} in\n{table}");
    }
    let report: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("eval_report.json")).unwrap()).unwrap();
    let rows = report["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 6);
    assert!(rows.iter().all(|r| r["runs"].as_array().unwrap().len() == 2));

    // a family member from the ground truth, queried on metadata embeddings
    let pairs = std::fs::read_to_string(dir.path().join("pairs.csv")).unwrap();
    let (a, b) = pairs.lines().nth(1).unwrap().split_once(',').unwrap();
    let out = ok(dir.path(), &["--config", c, "neighbors", a, "--source", "features"]);
    let listed: Vec<&str> = out.lines().skip(1).filter_map(|l| l.split_whitespace().nth(1)).collect();
    assert!(listed.contains(&b), "{b} not among\n{out}");
    assert!(dir.path().join(format!("neighbors_{a}.json")).is_file());
}
