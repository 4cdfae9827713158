//! Ownership-graph inspection: build, wallet metrics, subgraph splits,
//! and edge perturbation sampling.

use std::collections::BTreeMap;
use std::path::Path;
use std::process::ExitCode;

use serde::Serialize;
use veblen::graph::{
    build_ownership_graph, compute_wallet_metrics, perturb_edges, split_subgraphs,
    OwnershipGraph, PerturbMode, PerturbWeighting, SplitOptions, WalletMetrics,
};
use veblen::model::MarketSnapshot;
use veblen::money::Eth;

use crate::context::{csv_table, hex, CliError, Ctx};

fn metrics_for(
    snapshot: &MarketSnapshot,
    graph: &OwnershipGraph,
) -> Result<WalletMetrics, CliError> {
    let floors: BTreeMap<&str, Eth> = snapshot
        .collections
        .iter()
        .map(|c| (c.slug.as_str(), c.floor_price))
        .collect();
    Ok(compute_wallet_metrics(graph, |slug| floors.get(slug).copied())?)
}

#[derive(Serialize)]
struct GraphShape {
    wallets: usize,
    collections: usize,
    edges: usize,
    content_hash: String,
}

pub fn build(ctx: &Ctx, source: Option<&Path>) -> Result<ExitCode, CliError> {
    let snapshot = ctx.load_market(source)?;
    let graph = build_ownership_graph(&snapshot.holdings);
    let shape = GraphShape {
        wallets: graph.wallet_count(),
        collections: graph.collection_count(),
        edges: graph.edge_count(),
        content_hash: hex(&graph.content_hash()),
    };
    ctx.write_json("graph.json", &shape)?;
    println!(
        "graph: {} wallets, {} collections, {} edges; content hash {}",
        shape.wallets,
        shape.collections,
        shape.edges,
        &shape.content_hash[..12],
    );
    Ok(ExitCode::SUCCESS)
}

pub fn metrics(ctx: &Ctx, source: Option<&Path>) -> Result<ExitCode, CliError> {
    let snapshot = ctx.load_market(source)?;
    let graph = build_ownership_graph(&snapshot.holdings);
    let metrics = metrics_for(&snapshot, &graph)?;
    let rows = graph.wallets().iter().enumerate().map(|(w, wallet)| {
        vec![
            wallet.as_str().to_string(),
            format!("{:.9}", metrics.wealth[w].to_f64()),
            metrics.affinity[w].to_string(),
            format!("{:.9}", metrics.importance[w].to_f64()),
        ]
    });
    let table = csv_table(&["wallet", "wealth", "affinity", "importance"], rows)?;
    ctx.write_bytes("wallet_metrics.csv", &table)?;
    let top = (0..graph.wallet_count())
        .max_by(|&a, &b| metrics.importance[a].cmp(&metrics.importance[b]));
    if let Some(w) = top {
        println!(
            "{} wallets; most important is {} (wealth {:.4}, affinity {})",
            graph.wallet_count(),
            graph.wallets()[w].as_str(),
            metrics.wealth[w].to_f64(),
            metrics.affinity[w],
        );
    }
    Ok(ExitCode::SUCCESS)
}

pub fn split(
    ctx: &Ctx,
    count: usize,
    wallet_seeds: usize,
    collection_cap: usize,
    source: Option<&Path>,
) -> Result<ExitCode, CliError> {
    let snapshot = ctx.load_market(source)?;
    let graph = build_ownership_graph(&snapshot.holdings);
    let options = SplitOptions {
        wallet_seed_count: wallet_seeds,
        collection_cap,
        count,
        seed: ctx.seed(),
    };
    let split = split_subgraphs(&graph, &options);
    let rows = split.subgraphs.iter().enumerate().map(|(i, sub)| {
        vec![
            i.to_string(),
            sub.wallets.len().to_string(),
            sub.collections.len().to_string(),
        ]
    });
    let table = csv_table(&["subgraph", "wallets", "collections"], rows)?;
    ctx.write_bytes("subgraphs.csv", &table)?;
    let covered = split.membership.iter().filter(|m| !m.is_empty()).count();
    println!(
        "split into {} subgraphs covering {} of {} collections",
        split.subgraphs.len(),
        covered,
        graph.collection_count(),
    );
    Ok(ExitCode::SUCCESS)
}

pub fn perturb(
    ctx: &Ctx,
    collection: &str,
    mode: PerturbMode,
    weighting: PerturbWeighting,
    edges: usize,
    source: Option<&Path>,
) -> Result<ExitCode, CliError> {
    let snapshot = ctx.load_market(source)?;
    let graph = build_ownership_graph(&snapshot.holdings);
    let metrics = metrics_for(&snapshot, &graph)?;
    let target = graph
        .collection_ix(collection)
        .ok_or_else(|| format!("collection {collection:?} holds no tokens in this snapshot"))?;
    let (sample, _overlay) =
        perturb_edges(&graph, target, edges, mode, weighting, &metrics, ctx.seed())?;
    let action = match mode {
        PerturbMode::Add => "add",
        PerturbMode::Delete => "delete",
    };
    let rows = sample.wallets.iter().map(|&w| {
        vec![
            graph.wallet(w).as_str().to_string(),
            collection.to_string(),
            action.to_string(),
        ]
    });
    let table = csv_table(&["wallet", "collection", "action"], rows)?;
    ctx.write_bytes("perturbation.csv", &table)?;
    if sample.short_sample {
        log::warn!("fewer weighted candidates than requested edges; sample is short");
    }
    if sample.used_uniform_fallback {
        log::warn!("every candidate had zero weight; the draw fell back to uniform");
    }
    println!(
        "sampled {} of {} requested {action} edges for {collection} ({:?} weighting, seed {})",
        sample.wallets.len(),
        edges,
        weighting,
        sample.seed,
    );
    Ok(ExitCode::SUCCESS)
}
