//! Rarity rankings and embedding-space measurements.

use std::path::Path;
use std::process::ExitCode;

use veblen::embeddings::{distinctiveness_scores, stability_curve};
use veblen::model::{EmbeddingRecord, MarketSnapshot, TokenTraits};

use crate::context::{csv_table, CliError, Ctx};

pub fn rarity_rank(ctx: &Ctx, collection: &str, source: Option<&Path>) -> Result<ExitCode, CliError> {
    let snapshot = ctx.load_market(source)?;
    let records: Vec<TokenTraits> = snapshot
        .traits
        .iter()
        .filter(|t| t.collection == collection)
        .cloned()
        .collect();
    if records.is_empty() {
        return Err(format!("collection {collection:?} has no trait records").into());
    }
    let mut scores = veblen::rarity::rarity_rank(&records)?;
    scores.sort_by(|a, b| a.rank.cmp(&b.rank).then_with(|| a.token_id.cmp(&b.token_id)));
    let rows = scores.iter().map(|s| {
        vec![
            s.token_id.clone(),
            s.one_of_one_count.to_string(),
            format!("{:.6}", s.information_content),
            s.rank.to_string(),
        ]
    });
    let table = csv_table(&["token_id", "one_of_ones", "ic_bits", "rank"], rows)?;
    ctx.write_bytes("rarity.csv", &table)?;
    let rarest = &scores[0];
    println!(
        "ranked {} tokens in {collection}; rarest is {} ({:.3} bits, {} one-of-one traits)",
        scores.len(),
        rarest.token_id,
        rarest.information_content,
        rarest.one_of_one_count,
    );
    Ok(ExitCode::SUCCESS)
}

fn collection_embeddings(
    snapshot: &MarketSnapshot,
    collection: &str,
) -> Result<Vec<EmbeddingRecord>, CliError> {
    let records: Vec<EmbeddingRecord> = snapshot
        .embeddings
        .iter()
        .filter(|e| e.collection == collection)
        .cloned()
        .collect();
    if records.is_empty() {
        return Err(format!("collection {collection:?} has no embeddings").into());
    }
    Ok(records)
}

pub fn centroid(
    ctx: &Ctx,
    collection: &str,
    sample_size: usize,
    source: Option<&Path>,
) -> Result<ExitCode, CliError> {
    let snapshot = ctx.load_market(source)?;
    let records = collection_embeddings(&snapshot, collection)?;
    let c = veblen::embeddings::centroid(&records, sample_size, ctx.seed())?;
    let rows = c
        .vector
        .iter()
        .enumerate()
        .map(|(dim, value)| vec![dim.to_string(), format!("{value:.9}")]);
    let table = csv_table(&["dim", "value"], rows)?;
    ctx.write_bytes("centroid.csv", &table)?;
    let norm = c.vector.iter().map(|v| v * v).sum::<f64>().sqrt();
    println!(
        "centroid of {collection} from {} sampled tokens; norm {:.4}",
        c.sample_size, norm,
    );
    Ok(ExitCode::SUCCESS)
}

pub fn distinctiveness(
    ctx: &Ctx,
    collection: &str,
    sample_size: usize,
    source: Option<&Path>,
) -> Result<ExitCode, CliError> {
    let snapshot = ctx.load_market(source)?;
    let records = collection_embeddings(&snapshot, collection)?;
    let c = veblen::embeddings::centroid(&records, sample_size, ctx.seed())?;
    let mut scores = distinctiveness_scores(&records, &c)?;
    scores.sort_by(|a, b| {
        b.distance
            .total_cmp(&a.distance)
            .then_with(|| a.token_id.cmp(&b.token_id))
    });
    let rows = scores
        .iter()
        .map(|s| vec![s.token_id.clone(), format!("{:.9}", s.distance)]);
    let table = csv_table(&["token_id", "distance"], rows)?;
    ctx.write_bytes("distinctiveness.csv", &table)?;
    println!(
        "scored {} tokens in {collection}; most distinctive is {} at distance {:.4}",
        scores.len(),
        scores[0].token_id,
        scores[0].distance,
    );
    Ok(ExitCode::SUCCESS)
}

pub fn stability(
    ctx: &Ctx,
    collection: &str,
    sizes: &[usize],
    trials: usize,
    source: Option<&Path>,
) -> Result<ExitCode, CliError> {
    let snapshot = ctx.load_market(source)?;
    let records = collection_embeddings(&snapshot, collection)?;
    let curve = stability_curve(&records, sizes, trials, ctx.seed())?;
    let rows = curve.iter().map(|p| {
        vec![
            p.size.to_string(),
            p.per_trial.len().to_string(),
            format!("{:.9}", p.mean_relative_difference),
            format!("{:.9}", median(&p.per_trial)),
        ]
    });
    let table = csv_table(
        &["size", "trials", "mean_relative_difference", "median_relative_difference"],
        rows,
    )?;
    ctx.write_bytes("stability.csv", &table)?;
    if let Some(last) = curve.last() {
        println!(
            "centroid stability at size {}: mean relative difference {:.4}, median {:.4}",
            last.size,
            last.mean_relative_difference,
            median(&last.per_trial),
        );
    }
    Ok(ExitCode::SUCCESS)
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}
