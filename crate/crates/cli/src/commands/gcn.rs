//! GCN training, full-graph prediction, and counterfactual edge
//! experiments against a trained checkpoint.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use serde::{Deserialize, Serialize};
use veblen::gcn::{
    bootstrap_mean_interval, bucketize_floor_prices, feature_matrix, full_graph_adjacency,
    load_checkpoint, predicted_delta_experiment, FeatureSpec, GcnModel, PerturbPlan,
};
use veblen::graph::{build_ownership_graph, PerturbMode, PerturbWeighting};
use veblen::model::MarketSnapshot;
use veblen::money::Eth;
use veblen::pipeline::GcnParams;

use crate::context::{csv_table, exit_for, parse_config_file, run_stages, CliError, Ctx};

/// Bootstrap replicates draw from their own stream of the experiment seed.
const SALT_BOOTSTRAP: u64 = 1;
const BOOTSTRAP_REPLICATES: usize = 1000;
const BOOTSTRAP_CONFIDENCE: f64 = 0.95;

#[derive(Default, Deserialize)]
#[serde(default)]
struct TrainFileConfig {
    seed: Option<u64>,
    #[serde(flatten)]
    gcn: GcnParams,
}

pub fn train(ctx: &Ctx, config_path: Option<&Path>) -> Result<ExitCode, CliError> {
    let file: TrainFileConfig = match config_path {
        Some(path) => parse_config_file(path)?,
        None => TrainFileConfig::default(),
    };
    let mut config = ctx.run_config();
    config.stages = vec!["gcn".to_string()];
    config.gcn = file.gcn;
    config.seed = ctx.seed_override().or(file.seed).unwrap_or(0);
    let manifest = run_stages(&config)?;
    if manifest.is_success() {
        let path = ctx.out().join("gcn/metrics.json");
        if let Ok(text) = fs::read_to_string(&path) {
            if let Ok(m) = serde_json::from_str::<serde_json::Value>(&text) {
                println!(
                    "test RMSE {} vs median-baseline RMSE {} (best epoch {})",
                    m["test_rmse"], m["baseline_rmse"], m["best_epoch"],
                );
            }
        }
    }
    Ok(exit_for(&manifest))
}

fn checkpoint_path(ctx: &Ctx, flag: Option<&Path>) -> PathBuf {
    flag.map(Path::to_path_buf)
        .unwrap_or_else(|| ctx.out().join("gcn/model.bin"))
}

/// Scalar checkpoints need no extra inputs; embedding checkpoints need the
/// per-collection centroids the model was trained with.
fn feature_spec(
    ctx: &Ctx,
    model: &GcnModel,
    centroids: Option<&Path>,
) -> Result<FeatureSpec, CliError> {
    if model.f_in == 1 {
        return Ok(FeatureSpec::Scalar);
    }
    let path = match centroids {
        Some(path) => path.to_path_buf(),
        None => {
            let manifest = ctx.manifest().map_err(|e| {
                format!(
                    "this checkpoint takes {}-dim features; pass --centroids or run the embeddings stage first ({e})",
                    model.f_in
                )
            })?;
            let artifact = manifest.artifact("centroids.json").ok_or_else(|| {
                format!(
                    "this checkpoint takes {}-dim features; pass --centroids or run the embeddings stage first",
                    model.f_in
                )
            })?;
            ctx.out().join(&artifact.path)
        }
    };
    let text = fs::read_to_string(&path).map_err(|e| format!("read {}: {e}", path.display()))?;
    let map: BTreeMap<String, Vec<f64>> =
        serde_json::from_str(&text).map_err(|e| format!("parse {}: {e}", path.display()))?;
    Ok(FeatureSpec::Centroids(map))
}

pub fn predict(
    ctx: &Ctx,
    checkpoint: Option<&Path>,
    centroids: Option<&Path>,
    source: Option<&Path>,
) -> Result<ExitCode, CliError> {
    let path = checkpoint_path(ctx, checkpoint);
    let model = load_checkpoint(&path)?;
    let snapshot = ctx.load_market(source)?;
    let graph = build_ownership_graph(&snapshot.holdings);
    let spec = feature_spec(ctx, &model, centroids)?;
    let floors: Vec<(String, Eth)> = snapshot
        .collections
        .iter()
        .map(|c| (c.slug.clone(), c.floor_price))
        .collect();
    let targets = bucketize_floor_prices(&floors)?;
    let (adj, space) = full_graph_adjacency(&graph)?;
    let features = feature_matrix(&graph, &space, &spec)?;
    let preds = veblen::gcn::predict(&adj, &features, &model)?;
    let mut rows = Vec::new();
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
        rows.push(vec![slug.to_string(), target, format!("{:.6}", preds[row])]);
    }
    let n = rows.len();
    let table = csv_table(&["collection", "target_bucket", "predicted_bucket"], rows)?;
    ctx.write_bytes("predictions.csv", &table)?;
    println!(
        "predicted {} collections with the checkpoint at {} (best epoch {})",
        n,
        path.display(),
        model.best_epoch,
    );
    Ok(ExitCode::SUCCESS)
}

#[derive(Serialize)]
struct ExperimentArtifact {
    collection: String,
    mode: String,
    weighting: String,
    edge_count: usize,
    samples: usize,
    base_prediction: f64,
    mean_delta: f64,
    fraction_positive: f64,
    bootstrap_confidence: f64,
    bootstrap_low: f64,
    bootstrap_high: f64,
}

#[allow(clippy::too_many_arguments)]
pub fn perturb_experiment(
    ctx: &Ctx,
    collection: &str,
    mode: PerturbMode,
    weighting: PerturbWeighting,
    edges: usize,
    samples: usize,
    checkpoint: Option<&Path>,
    centroids: Option<&Path>,
    source: Option<&Path>,
) -> Result<ExitCode, CliError> {
    let path = checkpoint_path(ctx, checkpoint);
    let model = load_checkpoint(&path)?;
    let snapshot = ctx.load_market(source)?;
    let graph = build_ownership_graph(&snapshot.holdings);
    let metrics = metrics_for(&snapshot, &graph)?;
    let target = graph
        .collection_ix(collection)
        .ok_or_else(|| format!("collection {collection:?} holds no tokens in this snapshot"))?;
    let spec = feature_spec(ctx, &model, centroids)?;
    let plan = PerturbPlan {
        mode,
        weighting,
        edge_count: edges,
    };
    let summary = predicted_delta_experiment(
        &model,
        &graph,
        target,
        plan,
        &metrics,
        &spec,
        samples,
        ctx.seed(),
    )?;
    let (low, high) = bootstrap_mean_interval(
        &summary.deltas,
        BOOTSTRAP_REPLICATES,
        BOOTSTRAP_CONFIDENCE,
        veblen::derive_seed(ctx.seed(), SALT_BOOTSTRAP),
    )?;

    let rows = summary
        .deltas
        .iter()
        .enumerate()
        .map(|(i, d)| vec![i.to_string(), format!("{d:.9}")]);
    let table = csv_table(&["sample", "delta"], rows)?;
    ctx.write_bytes("deltas.csv", &table)?;
    ctx.write_json(
        "experiment.json",
        &ExperimentArtifact {
            collection: collection.to_string(),
            mode: format!("{mode:?}").to_lowercase(),
            weighting: format!("{weighting:?}").to_lowercase(),
            edge_count: edges,
            samples,
            base_prediction: summary.base_prediction,
            mean_delta: summary.mean_delta,
            fraction_positive: summary.fraction_positive,
            bootstrap_confidence: BOOTSTRAP_CONFIDENCE,
            bootstrap_low: low,
            bootstrap_high: high,
        },
    )?;
    println!(
        "mean prediction delta {:+.6} buckets over {} samples ({:.2}% positive); {:.0}% bootstrap CI [{:+.6}, {:+.6}]",
        summary.mean_delta,
        samples,
        summary.fraction_positive * 100.0,
        BOOTSTRAP_CONFIDENCE * 100.0,
        low,
        high,
    );
    Ok(ExitCode::SUCCESS)
}

fn metrics_for(
    snapshot: &MarketSnapshot,
    graph: &veblen::graph::OwnershipGraph,
) -> Result<veblen::graph::WalletMetrics, CliError> {
    let floors: BTreeMap<&str, Eth> = snapshot
        .collections
        .iter()
        .map(|c| (c.slug.as_str(), c.floor_price))
        .collect();
    Ok(veblen::graph::compute_wallet_metrics(graph, |slug| {
        floors.get(slug).copied()
    })?)
}
