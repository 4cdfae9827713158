//! Config-driven experiment runs with a content-addressed manifest.
//!
//! A run reads one TOML config, executes the requested stages in
//! dependency order (ingest, then rarity, embeddings, and graph, then
//! gcn, stats, and sim), and records every emitted file in a manifest
//! with its sha256. Stages exchange data only through manifest entries,
//! so the dataflow between them is explicit, and a rerun with the same
//! config and seed reproduces every hash. A failing stage stops the run;
//! whatever it already emitted stays on disk, flagged by the stage's
//! failed status in the manifest.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::embeddings::{centroid, distinctiveness_scores};
use crate::gcn::{
    bucketize_floor_prices, feature_matrix, full_graph_adjacency, median_baseline, predict,
    prepare_samples, rmse_on, save_checkpoint, split_collections, train, FeatureSpec, TrainConfig,
};
use crate::graph::{build_ownership_graph, compute_wallet_metrics, split_subgraphs, SplitOptions};
use crate::ingest::{
    load_snapshot, write_snapshot_dir, EmbeddingsFormat, SnapshotSource, SourceKind,
    DEFAULT_MAX_SUPPLY_FILTER,
};
use crate::model::{validate_snapshot, EmbeddingRecord, MarketSnapshot, ValidationReport};
use crate::money::Eth;
use crate::plot::{bar_chart, line_chart, Series};
use crate::rarity::rarity_rank;
use crate::sim::{
    assumption_check, complementarity_probe, default_grids, equilibrium, AgentPopulation,
    EquilibriumOptions, ModelParams, ProfileShift, DEFAULT_GRID_POINTS,
};
use crate::stats::{
    correlation_census, detect_wash_trades, fixed_effect_fit, quantile_bins, rarity_quantiles,
    CategoryFilter, FixedEffectMode, Predictor,
};
use crate::synth::{generate_market, SynthConfig};
use crate::{derive_seed, sim};

/// Environment variables with this prefix override config keys. Nested
/// keys use a double underscore: `VEBLEN_GCN__EPOCHS=50`.
pub const ENV_PREFIX: &str = "VEBLEN_";

/// Stages in dependency order; requested stages always run in this order.
pub const STAGE_ORDER: [&str; 7] = [
    "ingest",
    "rarity",
    "embeddings",
    "graph",
    "gcn",
    "stats",
    "sim",
];

const SALT_SYNTH: u64 = 0x70;
const SALT_CENTROID: u64 = 0x71;
const SALT_GCN_SPLIT: u64 = 0x72;
const SALT_GCN_TRAIN: u64 = 0x73;

const WASH_WINDOW_HOURS: i64 = 24;
const WASH_MAX_WALLETS: usize = 2;
const WASH_MIN_TRADES: usize = 4;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("bad config: {0}")]
    Config(String),
    #[error("i/o failure at {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceOrigin {
    Synth,
    Directory,
    Http,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SourceConfig {
    pub origin: SourceOrigin,
    /// Directory path or base URL; unused for synth.
    pub location: String,
    /// None disables the total-supply filter.
    pub max_supply_filter: Option<u64>,
}

impl Default for SourceConfig {
    fn default() -> SourceConfig {
        SourceConfig {
            origin: SourceOrigin::Synth,
            location: String::new(),
            max_supply_filter: Some(DEFAULT_MAX_SUPPLY_FILTER),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GcnParams {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub train_fraction: f64,
    pub val_fraction: f64,
    pub subgraph_count: usize,
    pub wallet_seed_count: usize,
    pub collection_cap: usize,
    /// Use per-collection embedding centroids as node features instead of
    /// the scalar 1; requires the embeddings stage.
    pub centroid_features: bool,
}

impl Default for GcnParams {
    fn default() -> GcnParams {
        GcnParams {
            epochs: 300,
            batch_size: 4,
            learning_rate: 1e-3,
            train_fraction: 0.70,
            val_fraction: 0.15,
            subgraph_count: 12,
            wallet_seed_count: 75,
            collection_cap: 1500,
            centroid_features: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StatsParams {
    pub alpha: f64,
    pub bins: usize,
    /// Fraction of the rarest tail dropped for the censored correlation.
    pub censor_fraction: f64,
}

impl Default for StatsParams {
    fn default() -> StatsParams {
        StatsParams {
            alpha: 0.05,
            bins: 20,
            censor_fraction: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimParams {
    pub params: ModelParams,
    pub z_min: f64,
    pub z_max: f64,
    pub points: usize,
    pub tol: f64,
    pub max_iters: usize,
    pub damping: f64,
    pub probe_mass: f64,
    pub probe_level: f64,
}

impl Default for SimParams {
    fn default() -> SimParams {
        SimParams {
            params: ModelParams::default(),
            z_min: 2.0,
            z_max: 10.0,
            points: DEFAULT_GRID_POINTS,
            tol: sim::DEFAULT_EQ_TOL,
            max_iters: 500,
            damping: sim::DEFAULT_DAMPING,
            probe_mass: 0.05,
            probe_level: 5.0,
        }
    }
}

/// One run: where artifacts go, which stages execute, and every stage's
/// parameters. All per-stage seeds are derived from the global seed; a
/// `[synth]` seed is honored only by the standalone synth command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub out: String,
    pub seed: u64,
    pub stages: Vec<String>,
    pub source: SourceConfig,
    pub synth: SynthConfig,
    pub gcn: GcnParams,
    pub stats: StatsParams,
    pub sim: SimParams,
}

impl Default for RunConfig {
    fn default() -> RunConfig {
        RunConfig {
            out: "out".to_string(),
            seed: 0,
            stages: Vec::new(),
            source: SourceConfig::default(),
            synth: SynthConfig::default(),
            gcn: GcnParams::default(),
            stats: StatsParams::default(),
            sim: SimParams::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<RunConfig, PipelineError> {
        let value: toml::Value = text
            .parse()
            .map_err(|e| PipelineError::Config(format!("config does not parse: {e}")))?;
        value
            .try_into()
            .map_err(|e| PipelineError::Config(format!("config does not deserialize: {e}")))
    }

    /// Parses TOML and then applies `VEBLEN_`-prefixed variable pairs on
    /// top, so environment overrides beat file values.
    pub fn from_toml_with_overrides(
        text: &str,
        vars: impl Iterator<Item = (String, String)>,
    ) -> Result<RunConfig, PipelineError> {
        let mut value: toml::Value = text
            .parse()
            .map_err(|e| PipelineError::Config(format!("config does not parse: {e}")))?;
        for (key, raw) in vars {
            let Some(stripped) = key.strip_prefix(ENV_PREFIX) else {
                continue;
            };
            let path: Vec<String> = stripped
                .split("__")
                .map(|s| s.to_ascii_lowercase())
                .collect();
            if path.iter().any(|s| s.is_empty()) {
                return Err(PipelineError::Config(format!("bad override key {key}")));
            }
            set_path(&mut value, &path, parse_override(&raw));
        }
        value
            .try_into()
            .map_err(|e| PipelineError::Config(format!("config does not deserialize: {e}")))
    }

    pub fn load(path: &Path) -> Result<RunConfig, PipelineError> {
        let text = fs::read_to_string(path).map_err(|e| PipelineError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        RunConfig::from_toml(&text)
    }
}

fn parse_override(raw: &str) -> toml::Value {
    let scalar = |s: &str| {
        let t = s.trim();
        if let Ok(b) = t.parse::<bool>() {
            return toml::Value::Boolean(b);
        }
        if let Ok(i) = t.parse::<i64>() {
            return toml::Value::Integer(i);
        }
        if let Ok(f) = t.parse::<f64>() {
            return toml::Value::Float(f);
        }
        toml::Value::String(t.to_string())
    };
    if raw.contains(',') {
        toml::Value::Array(raw.split(',').map(scalar).collect())
    } else {
        scalar(raw)
    }
}

fn set_path(root: &mut toml::Value, path: &[String], value: toml::Value) {
    let mut cursor = root;
    for seg in &path[..path.len() - 1] {
        let table = cursor
            .as_table_mut()
            .expect("override cursor always points at a table");
        let next = table
            .entry(seg.clone())
            .or_insert_with(|| toml::Value::Table(toml::value::Table::new()));
        if !next.is_table() {
            *next = toml::Value::Table(toml::value::Table::new());
        }
        cursor = next;
    }
    if let Some(table) = cursor.as_table_mut() {
        table.insert(path[path.len() - 1].clone(), value);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Artifact {
    pub name: String,
    /// Path relative to the run's output directory.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageStatus {
    Ok,
    Failed { error: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: String,
    pub status: StageStatus,
    pub artifacts: Vec<Artifact>,
}

/// What a run emitted. Contains no timestamps or absolute paths, so two
/// runs of the same config and seed serialize to the same bytes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    pub stages: Vec<StageRecord>,
}

impl Manifest {
    pub fn artifact(&self, name: &str) -> Option<&Artifact> {
        self.stages
            .iter()
            .flat_map(|s| &s.artifacts)
            .find(|a| a.name == name)
    }

    pub fn failed_stage(&self) -> Option<&str> {
        self.stages
            .iter()
            .find(|s| matches!(s.status, StageStatus::Failed { .. }))
            .map(|s| s.stage.as_str())
    }

    pub fn is_success(&self) -> bool {
        self.failed_stage().is_none()
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

struct Runner<'a> {
    config: &'a RunConfig,
    out: PathBuf,
    manifest: Manifest,
}

impl Runner<'_> {
    /// Hashes an already-written file and records it under the running
    /// stage.
    fn record(&mut self, name: &str, rel: &str) -> Result<(), String> {
        let path = self.out.join(rel);
        let mut file = fs::File::open(&path).map_err(|e| format!("open {rel}: {e}"))?;
        let mut hasher = Sha256::new();
        let bytes = std::io::copy(&mut file, &mut hasher).map_err(|e| format!("read {rel}: {e}"))?;
        let stage = self
            .manifest
            .stages
            .last_mut()
            .expect("record is only called inside a stage");
        stage.artifacts.push(Artifact {
            name: name.to_string(),
            path: rel.to_string(),
            sha256: hex(&hasher.finalize()),
            bytes,
        });
        Ok(())
    }

    fn emit(&mut self, name: &str, rel: &str, bytes: &[u8]) -> Result<(), String> {
        let path = self.out.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| format!("mkdir for {rel}: {e}"))?;
        }
        fs::write(&path, bytes).map_err(|e| format!("write {rel}: {e}"))?;
        self.record(name, rel)
    }

    fn emit_json<T: Serialize>(&mut self, name: &str, rel: &str, value: &T) -> Result<(), String> {
        let mut bytes =
            serde_json::to_vec_pretty(value).map_err(|e| format!("serialize {name}: {e}"))?;
        bytes.push(b'\n');
        self.emit(name, rel, &bytes)
    }

    /// Locates an input by manifest entry; absent means its producing
    /// stage did not run.
    fn input_path(&self, name: &str) -> Result<PathBuf, String> {
        self.manifest
            .artifact(name)
            .map(|a| self.out.join(&a.path))
            .ok_or_else(|| format!("missing input artifact {name}; run its producing stage first"))
    }

    fn load_market(&self) -> Result<MarketSnapshot, String> {
        let marker = self.input_path("collections.jsonl")?;
        let dir = marker
            .parent()
            .ok_or_else(|| "snapshot artifact has no parent directory".to_string())?;
        let source = SnapshotSource {
            kind: SourceKind::Directory,
            location: dir.display().to_string(),
            // the ingest stage already applied any requested filter
            max_supply_filter: None,
        };
        let loaded = load_snapshot(&source).map_err(|e| format!("reload snapshot: {e}"))?;
        Ok(loaded.snapshot)
    }
}

#[derive(Serialize)]
struct ValidationArtifact<'a> {
    valid: bool,
    rejected_lines: usize,
    report: &'a ValidationReport,
}

fn stage_ingest(r: &mut Runner) -> Result<(), String> {
    let (snapshot, rejected_lines, report) = match r.config.source.origin {
        SourceOrigin::Synth => {
            let mut synth = r.config.synth.clone();
            synth.seed = derive_seed(r.config.seed, SALT_SYNTH);
            let (snapshot, truth) = generate_market(&synth).map_err(|e| e.to_string())?;
            r.emit_json("truth.json", "snapshot/truth.json", &truth)?;
            let report = validate_snapshot(&snapshot);
            (snapshot, 0, report)
        }
        SourceOrigin::Directory | SourceOrigin::Http => {
            let kind = match r.config.source.origin {
                SourceOrigin::Http => SourceKind::Http,
                _ => SourceKind::Directory,
            };
            let source = SnapshotSource {
                kind,
                location: r.config.source.location.clone(),
                max_supply_filter: r.config.source.max_supply_filter,
            };
            let loaded = load_snapshot(&source).map_err(|e| e.to_string())?;
            let rejected = loaded.reject_count();
            (loaded.snapshot, rejected, loaded.validation)
        }
    };

    let dir = r.out.join("snapshot");
    write_snapshot_dir(&snapshot, &dir, EmbeddingsFormat::Binary).map_err(|e| e.to_string())?;
    for file in [
        "collections.jsonl",
        "holdings.csv",
        "traits.jsonl",
        "transactions.jsonl",
        "embeddings.bin",
    ] {
        r.record(file, &format!("snapshot/{file}"))?;
    }
    r.emit_json(
        "validation.json",
        "snapshot/validation.json",
        &ValidationArtifact {
            valid: report.is_valid(),
            rejected_lines,
            report: &report,
        },
    )?;
    if !report.is_valid() {
        return Err(format!(
            "snapshot failed validation with {} violation(s)",
            report.violations.len()
        ));
    }
    Ok(())
}

fn stage_rarity(r: &mut Runner) -> Result<(), String> {
    let snapshot = r.load_market()?;
    let mut grouped: BTreeMap<&str, Vec<crate::model::TokenTraits>> = BTreeMap::new();
    for record in &snapshot.traits {
        grouped
            .entry(record.collection.as_str())
            .or_default()
            .push(record.clone());
    }
    let mut csv = csv_writer();
    write_row(&mut csv, ["collection", "token_id", "rank", "information_content", "quantile"])?;
    for (slug, records) in grouped {
        let scores = rarity_rank(&records).map_err(|e| format!("{slug}: {e}"))?;
        let count = scores.len() as f64;
        for s in &scores {
            write_row(
                &mut csv,
                [
                    slug.to_string(),
                    s.token_id.clone(),
                    s.rank.to_string(),
                    format!("{:.12}", s.information_content),
                    format!("{:.12}", s.rank as f64 / count),
                ],
            )?;
        }
    }
    r.emit("rarity.csv", "rarity/rarity.csv", &finish_csv(csv)?)
}

fn stage_embeddings(r: &mut Runner) -> Result<(), String> {
    let snapshot = r.load_market()?;
    let mut grouped: BTreeMap<&str, Vec<EmbeddingRecord>> = BTreeMap::new();
    for record in &snapshot.embeddings {
        grouped
            .entry(record.collection.as_str())
            .or_default()
            .push(record.clone());
    }
    let seed = derive_seed(r.config.seed, SALT_CENTROID);
    let mut centroids: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let mut csv = csv_writer();
    write_row(&mut csv, ["collection", "token_id", "distance"])?;
    for (slug, records) in grouped {
        let c = centroid(&records, records.len(), seed).map_err(|e| format!("{slug}: {e}"))?;
        for score in distinctiveness_scores(&records, &c).map_err(|e| format!("{slug}: {e}"))? {
            write_row(
                &mut csv,
                [slug.to_string(), score.token_id, format!("{:.12}", score.distance)],
            )?;
        }
        centroids.insert(slug.to_string(), c.vector);
    }
    r.emit(
        "distinctiveness.csv",
        "embeddings/distinctiveness.csv",
        &finish_csv(csv)?,
    )?;
    r.emit_json("centroids.json", "embeddings/centroids.json", &centroids)
}

#[derive(Serialize)]
struct GraphSummary {
    wallets: usize,
    collections: usize,
    edges: usize,
    content_hash: String,
}

fn stage_graph(r: &mut Runner) -> Result<(), String> {
    let snapshot = r.load_market()?;
    let graph = build_ownership_graph(&snapshot.holdings);
    let floors: BTreeMap<&str, Eth> = snapshot
        .collections
        .iter()
        .map(|c| (c.slug.as_str(), c.floor_price))
        .collect();
    let metrics = compute_wallet_metrics(&graph, |slug| floors.get(slug).copied())
        .map_err(|e| e.to_string())?;

    let mut csv = csv_writer();
    write_row(&mut csv, ["wallet", "wealth_eth", "affinity", "importance_eth"])?;
    for (w, wallet) in graph.wallets().iter().enumerate() {
        write_row(
            &mut csv,
            [
                wallet.as_str().to_string(),
                format!("{:.9}", metrics.wealth[w].to_f64()),
                metrics.affinity[w].to_string(),
                format!("{:.9}", metrics.importance[w].to_f64()),
            ],
        )?;
    }
    r.emit("wallet_metrics.csv", "graph/wallet_metrics.csv", &finish_csv(csv)?)?;

    let mut csv = csv_writer();
    write_row(&mut csv, ["collection", "overlap"])?;
    for (c, slug) in graph.collections().iter().enumerate() {
        write_row(&mut csv, [slug.to_string(), metrics.overlap[c].to_string()])?;
    }
    r.emit(
        "collection_overlap.csv",
        "graph/collection_overlap.csv",
        &finish_csv(csv)?,
    )?;

    r.emit_json(
        "graph.json",
        "graph/graph.json",
        &GraphSummary {
            wallets: graph.wallet_count(),
            collections: graph.collection_count(),
            edges: graph.edge_count(),
            content_hash: hex(&graph.content_hash()),
        },
    )
}

#[derive(Serialize)]
struct GcnMetrics {
    train_rmse: f64,
    val_rmse: f64,
    test_rmse: f64,
    baseline_prediction: f64,
    baseline_rmse: f64,
    best_epoch: usize,
    epochs: usize,
}

fn stage_gcn(r: &mut Runner) -> Result<(), String> {
    let snapshot = r.load_market()?;
    let graph = build_ownership_graph(&snapshot.holdings);
    let floors: Vec<(String, Eth)> = snapshot
        .collections
        .iter()
        .map(|c| (c.slug.clone(), c.floor_price))
        .collect();
    let targets = bucketize_floor_prices(&floors).map_err(|e| e.to_string())?;

    let p = &r.config.gcn;
    let split = split_subgraphs(
        &graph,
        &SplitOptions {
            wallet_seed_count: p.wallet_seed_count,
            collection_cap: p.collection_cap,
            count: p.subgraph_count,
            seed: derive_seed(r.config.seed, SALT_GCN_SPLIT),
        },
    );
    let train_config = TrainConfig {
        epochs: p.epochs,
        batch_size: p.batch_size,
        learning_rate: p.learning_rate,
        seed: derive_seed(r.config.seed, SALT_GCN_TRAIN),
        train_fraction: p.train_fraction,
        val_fraction: p.val_fraction,
    };
    let slugs: Vec<String> = snapshot.collections.iter().map(|c| c.slug.clone()).collect();
    let assignment = split_collections(&slugs, &train_config).map_err(|e| e.to_string())?;
    let spec = if p.centroid_features {
        let path = r.input_path("centroids.json")?;
        let text = fs::read_to_string(&path).map_err(|e| format!("read centroids: {e}"))?;
        let centroids: BTreeMap<String, Vec<f64>> =
            serde_json::from_str(&text).map_err(|e| format!("parse centroids: {e}"))?;
        FeatureSpec::Centroids(centroids)
    } else {
        FeatureSpec::Scalar
    };
    let samples =
        prepare_samples(&graph, &split, &targets, &assignment, &spec).map_err(|e| e.to_string())?;
    let (model, log) = train(&samples, &train_config).map_err(|e| e.to_string())?;

    let checkpoint = r.out.join("gcn/model.bin");
    if let Some(parent) = checkpoint.parent() {
        fs::create_dir_all(parent).map_err(|e| format!("mkdir gcn: {e}"))?;
    }
    save_checkpoint(&model, &checkpoint).map_err(|e| e.to_string())?;
    r.record("model.bin", "gcn/model.bin")?;

    let (baseline_prediction, baseline_rmse) =
        median_baseline(&targets).map_err(|e| e.to_string())?;
    let metrics = GcnMetrics {
        train_rmse: rmse_on(&model, &samples, |s| &s.train_nodes).map_err(|e| e.to_string())?,
        val_rmse: rmse_on(&model, &samples, |s| &s.val_nodes).map_err(|e| e.to_string())?,
        test_rmse: rmse_on(&model, &samples, |s| &s.test_nodes).map_err(|e| e.to_string())?,
        baseline_prediction,
        baseline_rmse,
        best_epoch: log.best_epoch,
        epochs: p.epochs,
    };
    r.emit_json("gcn_metrics.json", "gcn/metrics.json", &metrics)?;

    let (adj, space) = full_graph_adjacency(&graph).map_err(|e| e.to_string())?;
    let features = feature_matrix(&graph, &space, &spec).map_err(|e| e.to_string())?;
    let preds = predict(&adj, &features, &model).map_err(|e| e.to_string())?;
    let mut csv = csv_writer();
    write_row(&mut csv, ["collection", "target_bucket", "predicted_bucket"])?;
    for &c in space.collection_ids() {
        let slug = graph.collection(c);
        let row = space
            .collection_row(c)
            .ok_or_else(|| format!("collection {slug} missing from node space"))?;
        let target = targets
            .bucket
            .get(slug)
            .map(|&b| b.to_string())
            .unwrap_or_default();
        write_row(&mut csv, [slug.to_string(), target, format!("{:.6}", preds[row])])?;
    }
    r.emit("predictions.csv", "gcn/predictions.csv", &finish_csv(csv)?)?;

    let curve = Series {
        name: "validation RMSE".to_string(),
        points: log
            .epoch_val_rmse
            .iter()
            .enumerate()
            .map(|(i, &v)| (i as f64 + 1.0, v))
            .collect(),
    };
    let svg = line_chart("Validation RMSE by epoch", "epoch", "RMSE (buckets)", &[curve])
        .map_err(|e| e.to_string())?;
    r.emit("training_curve.svg", "gcn/training_curve.svg", svg.as_bytes())
}

#[derive(Serialize)]
struct CensoredArtifact {
    /// Orientation of the correlations below; positive means rarer sells
    /// for more.
    predictor: &'static str,
    censor_fraction: f64,
    full: crate::stats::CorrelationResult,
    censored: crate::stats::CorrelationResult,
}

fn stage_stats(r: &mut Runner) -> Result<(), String> {
    let snapshot = r.load_market()?;
    let p = &r.config.stats;

    let census = correlation_census(&snapshot, Predictor::RarityRank, CategoryFilter::All, p.alpha)
        .map_err(|e| e.to_string())?;
    r.emit_json("census.json", "stats/census.json", &census)?;
    let mut csv = csv_writer();
    write_row(&mut csv, ["collection", "outcome", "coefficient", "p_value", "n"])?;
    for detail in &census.details {
        use crate::stats::CorrelationOutcome;
        match &detail.outcome {
            CorrelationOutcome::Included(res) => write_row(
                &mut csv,
                [
                    detail.slug.clone(),
                    "included".to_string(),
                    format!("{:.9}", res.coefficient),
                    format!("{:.9}", res.p_value),
                    res.n.to_string(),
                ],
            )?,
            CorrelationOutcome::Excluded(reason) => write_row(
                &mut csv,
                [
                    detail.slug.clone(),
                    format!("excluded: {reason:?}"),
                    String::new(),
                    String::new(),
                    String::new(),
                ],
            )?,
        }
    }
    r.emit("census.csv", "stats/census.csv", &finish_csv(csv)?)?;

    let quantiles = rarity_quantiles(&snapshot.traits).map_err(|e| e.to_string())?;
    let mut fits = BTreeMap::new();
    for (name, mode) in [
        ("multiplicative", FixedEffectMode::Multiplicative),
        ("additive", FixedEffectMode::Additive),
        ("none", FixedEffectMode::None),
    ] {
        let fit =
            fixed_effect_fit(&snapshot.transactions, &quantiles, mode).map_err(|e| e.to_string())?;
        fits.insert(name, fit);
    }
    r.emit_json("fixed_effect.json", "stats/fixed_effect.json", &fits)?;

    // pooled scale-free sample: rarity quantile against the token's mean
    // price as a multiple of its collection's mean
    let mut token_prices: BTreeMap<(String, String), (f64, usize)> = BTreeMap::new();
    for tx in &snapshot.transactions {
        let entry = token_prices
            .entry((tx.collection.clone(), tx.token_id.clone()))
            .or_insert((0.0, 0));
        entry.0 += tx.price.to_f64();
        entry.1 += 1;
    }
    let mut by_collection: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
    for ((slug, token), (sum, n)) in &token_prices {
        if let Some(&q) = quantiles.get(&(slug.clone(), token.clone())) {
            by_collection
                .entry(slug.clone())
                .or_default()
                .push((q, sum / *n as f64));
        }
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for points in by_collection.values() {
        let mean: f64 = points.iter().map(|&(_, p)| p).sum::<f64>() / points.len() as f64;
        if mean <= 0.0 {
            continue;
        }
        for &(q, price) in points {
            xs.push(q);
            ys.push(price / mean);
        }
    }

    let bins = quantile_bins(&xs, &ys, p.bins).map_err(|e| e.to_string())?;
    let mut csv = csv_writer();
    write_row(&mut csv, ["bin", "count", "mean_quantile", "mean_price_ratio"])?;
    let mut bars = Vec::new();
    for b in &bins {
        // tie runs stick to the lower bin, which can leave a bin empty
        let (mean_q, mean_ratio) = if b.count > 0 {
            (format!("{:.9}", b.mean_predictor), format!("{:.9}", b.mean_response))
        } else {
            (String::new(), String::new())
        };
        write_row(&mut csv, [b.index.to_string(), b.count.to_string(), mean_q, mean_ratio])?;
        if b.count > 0 {
            bars.push((b.index.to_string(), b.mean_response));
        }
    }
    r.emit("bins.csv", "stats/bins.csv", &finish_csv(csv)?)?;
    let svg = bar_chart(
        "Mean price ratio by rarity-quantile bin",
        "bin (0 = rarest)",
        "price / collection mean",
        &bars,
    )
    .map_err(|e| e.to_string())?;
    r.emit("bins.svg", "stats/bins.svg", svg.as_bytes())?;

    // censoring removes the rarest tokens, so the censor's predictor is
    // rarity extremity 1 - q (largest = rarest)
    let extremity: Vec<f64> = xs.iter().map(|&q| 1.0 - q).collect();
    let full = crate::stats::pearson(&extremity, &ys).map_err(|e| e.to_string())?;
    let censored = crate::stats::censored_correlation(&extremity, &ys, p.censor_fraction)
        .map_err(|e| e.to_string())?;
    r.emit_json(
        "censored.json",
        "stats/censored.json",
        &CensoredArtifact {
            predictor: "rarity extremity (1 - quantile)",
            censor_fraction: p.censor_fraction,
            full,
            censored,
        },
    )?;

    let flags = detect_wash_trades(
        &snapshot.transactions,
        chrono::Duration::hours(WASH_WINDOW_HOURS),
        WASH_MAX_WALLETS,
        WASH_MIN_TRADES,
    );
    let mut csv = csv_writer();
    write_row(
        &mut csv,
        ["collection", "token_id", "window_start", "trades", "distinct_wallets"],
    )?;
    for f in &flags {
        write_row(
            &mut csv,
            [
                f.collection.clone(),
                f.token_id.clone(),
                f.window_start.to_rfc3339(),
                f.trades.to_string(),
                f.distinct_wallets.to_string(),
            ],
        )?;
    }
    r.emit("wash.csv", "stats/wash.csv", &finish_csv(csv)?)
}

fn stage_sim(r: &mut Runner) -> Result<(), String> {
    let p = &r.config.sim;
    let population = AgentPopulation::uniform_grid(p.z_min, p.z_max, p.points)
        .map_err(|e| e.to_string())?;
    let options = EquilibriumOptions {
        tol: p.tol,
        max_iters: p.max_iters,
        damping: p.damping,
        ..EquilibriumOptions::default()
    };
    let state = equilibrium(&population, &p.params, &options).map_err(|e| e.to_string())?;
    r.emit_json("equilibrium.json", "sim/equilibrium.json", &state)?;

    let mut csv = csv_writer();
    write_row(&mut csv, ["income", "consumption"])?;
    let mut points = Vec::with_capacity(state.population.len());
    for (&z, &x) in state
        .population
        .incomes()
        .iter()
        .zip(state.population.profile())
    {
        write_row(&mut csv, [format!("{z:.9}"), format!("{x:.9}")])?;
        points.push((z, x));
    }
    r.emit("profile.csv", "sim/profile.csv", &finish_csv(csv)?)?;
    let svg = line_chart(
        "Equilibrium visible consumption",
        "income z",
        "consumption x*(z)",
        &[Series {
            name: "x*(z)".to_string(),
            points,
        }],
    )
    .map_err(|e| e.to_string())?;
    r.emit("profile.svg", "sim/profile.svg", svg.as_bytes())?;

    let probe = complementarity_probe(
        &state,
        &p.params,
        &ProfileShift {
            mass: p.probe_mass,
            level: p.probe_level,
        },
        options.br_tol,
    )
    .map_err(|e| e.to_string())?;
    r.emit_json("probe.json", "sim/probe.json", &probe)?;

    let (z_grid, x_grid, s_grid) = default_grids();
    let report = assumption_check(&p.params, &z_grid, &x_grid, &s_grid);
    r.emit_json("assumptions.json", "sim/assumptions.json", &report)
}

fn csv_writer() -> csv::Writer<Vec<u8>> {
    csv::Writer::from_writer(Vec::new())
}

fn write_row<I, S>(w: &mut csv::Writer<Vec<u8>>, row: I) -> Result<(), String>
where
    I: IntoIterator<Item = S>,
    S: AsRef<[u8]>,
{
    w.write_record(row).map_err(|e| format!("csv row: {e}"))
}

fn finish_csv(w: csv::Writer<Vec<u8>>) -> Result<Vec<u8>, String> {
    w.into_inner().map_err(|e| format!("csv flush: {e}"))
}

/// Runs the requested stages in dependency order and writes the manifest
/// to `<out>/manifest.json`. Stage failures land in the manifest rather
/// than the error channel; the error channel is for a config or output
/// directory that cannot work at all.
///
/// Running into a directory that already holds a manifest resumes on top
/// of it: records of stages not requested now are retained and keep
/// serving as inputs, and rerun stages replace their old records.
pub fn run_pipeline(config: &RunConfig) -> Result<Manifest, PipelineError> {
    for stage in &config.stages {
        if !STAGE_ORDER.contains(&stage.as_str()) {
            return Err(PipelineError::Config(format!(
                "unknown stage {stage:?}; expected one of {STAGE_ORDER:?}"
            )));
        }
    }
    if config.out.is_empty() {
        return Err(PipelineError::Config("output directory must be set".to_string()));
    }
    let out = PathBuf::from(&config.out);
    fs::create_dir_all(&out).map_err(|e| PipelineError::Io {
        path: config.out.clone(),
        source: e,
    })?;

    let manifest_path = out.join("manifest.json");
    let mut retained: BTreeMap<String, StageRecord> = BTreeMap::new();
    if manifest_path.is_file() {
        let text = fs::read_to_string(&manifest_path).map_err(|e| PipelineError::Io {
            path: manifest_path.display().to_string(),
            source: e,
        })?;
        let old: Manifest = serde_json::from_str(&text).map_err(|e| {
            PipelineError::Config(format!("existing manifest does not parse: {e}"))
        })?;
        if old.seed != config.seed && !old.stages.is_empty() {
            log::warn!(
                "resuming over artifacts produced with seed {} (current seed {})",
                old.seed,
                config.seed
            );
        }
        retained = old.stages.into_iter().map(|s| (s.stage.clone(), s)).collect();
    }

    let mut runner = Runner {
        config,
        out: out.clone(),
        manifest: Manifest {
            seed: config.seed,
            stages: Vec::new(),
        },
    };
    let mut aborted = false;
    for stage in STAGE_ORDER {
        let requested = config.stages.iter().any(|s| s == stage);
        if !requested || aborted {
            if let Some(record) = retained.remove(stage) {
                runner.manifest.stages.push(record);
            }
            continue;
        }
        retained.remove(stage);
        runner.manifest.stages.push(StageRecord {
            stage: stage.to_string(),
            status: StageStatus::Ok,
            artifacts: Vec::new(),
        });
        log::info!("stage {stage} starting");
        let outcome = match stage {
            "ingest" => stage_ingest(&mut runner),
            "rarity" => stage_rarity(&mut runner),
            "embeddings" => stage_embeddings(&mut runner),
            "graph" => stage_graph(&mut runner),
            "gcn" => stage_gcn(&mut runner),
            "stats" => stage_stats(&mut runner),
            "sim" => stage_sim(&mut runner),
            _ => unreachable!("stage names were validated"),
        };
        let record = runner.manifest.stages.last_mut().expect("stage was pushed");
        match outcome {
            Ok(()) => log::info!("stage {stage} ok ({} artifacts)", record.artifacts.len()),
            Err(error) => {
                log::error!("stage {stage} failed: {error}");
                record.status = StageStatus::Failed { error };
                aborted = true;
            }
        }
    }

    let mut bytes = serde_json::to_vec_pretty(&runner.manifest).map_err(|e| PipelineError::Io {
        path: "manifest.json".to_string(),
        source: std::io::Error::other(e),
    })?;
    bytes.push(b'\n');
    fs::write(&manifest_path, &bytes).map_err(|e| PipelineError::Io {
        path: manifest_path.display().to_string(),
        source: e,
    })?;
    Ok(runner.manifest)
}
