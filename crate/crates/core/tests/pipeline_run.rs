//! End-to-end pipeline runs on generated markets.

use std::fs;
use std::path::Path;

use chrono::{TimeZone, Utc};
use sha2::{Digest, Sha256};
use veblen::ingest::{write_snapshot_dir, EmbeddingsFormat};
use veblen::model::{Address, Category, Collection, Holding, MarketSnapshot, Transaction};
use veblen::money::Eth;
use veblen::pipeline::{run_pipeline, RunConfig, SourceOrigin, StageStatus};
use veblen::synth::SynthConfig;

fn small_run(out: &Path) -> RunConfig {
    let mut config = RunConfig::default();
    config.out = out.display().to_string();
    config.seed = 5;
    config.stages = veblen::pipeline::STAGE_ORDER
        .iter()
        .map(|s| s.to_string())
        .collect();
    config.synth = SynthConfig {
        collections: 8,
        tokens_per_collection: 30,
        wallets: 120,
        communities: 4,
        sales_per_token: 2,
        trait_vocab: vec![8, 6],
        ..SynthConfig::default()
    };
    config.gcn.epochs = 40;
    config.gcn.batch_size = 2;
    config.gcn.subgraph_count = 4;
    config.gcn.wallet_seed_count = 20;
    config.gcn.collection_cap = 10;
    config.sim.points = 9;
    config
}

fn explain_failure(manifest: &veblen::pipeline::Manifest) -> String {
    manifest
        .stages
        .iter()
        .filter_map(|s| match &s.status {
            StageStatus::Failed { error } => Some(format!("{}: {error}", s.stage)),
            StageStatus::Ok => None,
        })
        .collect::<Vec<_>>()
        .join("; ")
}

fn sha256_hex(path: &Path) -> String {
    let bytes = fs::read(path).unwrap();
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    hasher
        .finalize()
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

#[test]
fn full_synth_run_emits_consistent_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let config = small_run(&out);
    let manifest = run_pipeline(&config).unwrap();
    assert!(manifest.is_success(), "failed: {}", explain_failure(&manifest));
    assert_eq!(manifest.stages.len(), 7);

    for name in [
        "collections.jsonl",
        "holdings.csv",
        "embeddings.bin",
        "truth.json",
        "validation.json",
        "rarity.csv",
        "distinctiveness.csv",
        "centroids.json",
        "wallet_metrics.csv",
        "graph.json",
        "model.bin",
        "gcn_metrics.json",
        "predictions.csv",
        "census.json",
        "fixed_effect.json",
        "bins.csv",
        "bins.svg",
        "wash.csv",
        "equilibrium.json",
        "profile.csv",
        "profile.svg",
        "probe.json",
        "assumptions.json",
    ] {
        let artifact = manifest
            .artifact(name)
            .unwrap_or_else(|| panic!("artifact {name} missing from manifest"));
        let path = out.join(&artifact.path);
        assert!(path.is_file(), "{name} not on disk at {}", artifact.path);
        assert_eq!(sha256_hex(&path), artifact.sha256, "{name} hash mismatch");
        assert_eq!(fs::metadata(&path).unwrap().len(), artifact.bytes);
    }

    // 2 sales per token, 25 hours apart, can never be flagged as washes
    let wash = fs::read_to_string(out.join("stats/wash.csv")).unwrap();
    assert_eq!(wash.lines().count(), 1, "only the header expected");

    let bins = fs::read_to_string(out.join("stats/bins.csv")).unwrap();
    assert_eq!(bins.lines().count(), 1 + config.stats.bins);

    let profile = fs::read_to_string(out.join("sim/profile.csv")).unwrap();
    assert_eq!(profile.lines().count(), 1 + config.sim.points);
}

#[test]
fn reruns_with_the_same_seed_reproduce_the_manifest_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    let mut config_a = small_run(&out_a);
    let mut config_b = small_run(&out_b);
    // gcn dominates runtime and has its own determinism coverage
    config_a.stages = ["ingest", "rarity", "embeddings", "graph", "stats", "sim"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    config_b.stages = config_a.stages.clone();

    run_pipeline(&config_a).unwrap();
    run_pipeline(&config_b).unwrap();
    let bytes_a = fs::read(out_a.join("manifest.json")).unwrap();
    let bytes_b = fs::read(out_b.join("manifest.json")).unwrap();
    assert_eq!(bytes_a, bytes_b);

    let mut config_c = small_run(&dir.path().join("c"));
    config_c.stages = config_a.stages.clone();
    config_c.seed = 6;
    run_pipeline(&config_c).unwrap();
    let bytes_c = fs::read(dir.path().join("c/manifest.json")).unwrap();
    assert_ne!(bytes_a, bytes_c, "a different seed must change hashes");
}

#[test]
fn census_on_planted_data_recovers_the_snob_share() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let mut config = small_run(&out);
    config.stages = ["ingest", "stats"].iter().map(|s| s.to_string()).collect();
    let manifest = run_pipeline(&config).unwrap();
    assert!(manifest.is_success(), "failed: {}", explain_failure(&manifest));

    let census: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("stats/census.json")).unwrap()).unwrap();
    let row = &census["row"];
    assert_eq!(row["total"], 8);
    // 70% of 8 collections carry the planted negative slope
    let negative = row["significant_negative"].as_u64().unwrap();
    assert!((5..=7).contains(&negative), "significant_negative = {negative}");
    assert_eq!(row["headline_positive"], false);
}

#[test]
fn invalid_snapshots_fail_ingest_but_keep_flagged_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let when = Utc.with_ymd_and_hms(2025, 1, 1, 0, 0, 0).unwrap();
    let snapshot = MarketSnapshot {
        collections: vec![Collection {
            slug: "real".to_string(),
            floor_price: Eth::from_wei(10u64.pow(18) as i128),
            category: Category::Art,
            created_at: when,
            total_supply: 5,
        }],
        holdings: vec![Holding {
            wallet: Address::new("0xaa"),
            collection: "ghost".to_string(),
            token_id: "1".to_string(),
        }],
        traits: vec![],
        transactions: vec![Transaction {
            collection: "real".to_string(),
            token_id: "1".to_string(),
            price: Eth::from_wei(10u64.pow(18) as i128),
            timestamp: when,
            buyer: Address::new("0xaa"),
            seller: Address::new("0xbb"),
        }],
        embeddings: vec![],
        snapshot_time: when,
    };
    write_snapshot_dir(&snapshot, &data, EmbeddingsFormat::Jsonl).unwrap();

    let out = dir.path().join("run");
    let mut config = small_run(&out);
    config.stages = vec!["ingest".to_string()];
    config.source.origin = SourceOrigin::Directory;
    config.source.location = data.display().to_string();

    let manifest = run_pipeline(&config).unwrap();
    assert_eq!(manifest.failed_stage(), Some("ingest"));
    let stage = &manifest.stages[0];
    let StageStatus::Failed { error } = &stage.status else {
        panic!("ingest should fail on a dangling holding");
    };
    assert!(error.contains("validation"), "{error}");
    // the partial snapshot artifacts stay on disk, flagged by the status
    assert!(!stage.artifacts.is_empty());
    assert!(manifest.artifact("validation.json").is_some());
    assert!(out.join("snapshot/validation.json").is_file());
}

#[test]
fn later_stages_resume_from_an_earlier_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");

    let mut first = small_run(&out);
    first.stages = vec!["ingest".to_string()];
    let manifest = run_pipeline(&first).unwrap();
    assert!(manifest.is_success(), "{}", explain_failure(&manifest));
    assert_eq!(manifest.stages.len(), 1);

    // a separate invocation reuses the recorded snapshot as its input
    let mut second = small_run(&out);
    second.stages = vec!["rarity".to_string(), "stats".to_string()];
    let manifest = run_pipeline(&second).unwrap();
    assert!(manifest.is_success(), "{}", explain_failure(&manifest));
    let names: Vec<&str> = manifest.stages.iter().map(|s| s.stage.as_str()).collect();
    assert_eq!(names, ["ingest", "rarity", "stats"]);
    assert!(manifest.artifact("rarity.csv").is_some());

    // rerunning one stage replaces its record and keeps the others
    let manifest = run_pipeline(&second).unwrap();
    assert_eq!(manifest.stages.len(), 3);
    assert!(out.join("stats/census.json").is_file());
}
