//! Price statistics over an ingested snapshot: census, variance
//! comparison, fixed-effect fits, quantile bins, censoring, wash flags,
//! and case-study selection.

use std::collections::BTreeMap;
use std::path::Path;
use std::process::ExitCode;

use chrono::Duration;
use serde::Serialize;
use veblen::model::MarketSnapshot;
use veblen::plot::bar_chart;
use veblen::stats::{
    censored_correlation, correlation_census, detect_wash_trades, fixed_effect_fit, pearson,
    quantile_bins, rarity_quantiles, select_case_studies as select_cases,
    variance_explained_comparison, CaseStudyConfig, CategoryFilter, CorrelationOutcome,
    CorrelationResult, ExclusionReason, FixedEffectMode, Predictor, QuantileBin,
};

use crate::context::{csv_table, sanitize, CliError, Ctx};

pub fn census(
    ctx: &Ctx,
    predictor: Predictor,
    filter: CategoryFilter,
    alpha: f64,
    source: Option<&Path>,
) -> Result<ExitCode, CliError> {
    let snapshot = ctx.load_market(source)?;
    let census = correlation_census(&snapshot, predictor, filter, alpha)?;
    ctx.write_json("census.json", &census)?;
    let rows = census.details.iter().map(|detail| match &detail.outcome {
        CorrelationOutcome::Included(r) => vec![
            detail.slug.clone(),
            r.n.to_string(),
            format!("{:.6}", r.coefficient),
            format!("{:.6e}", r.p_value),
            String::new(),
        ],
        CorrelationOutcome::Excluded(reason) => vec![
            detail.slug.clone(),
            String::new(),
            String::new(),
            String::new(),
            exclusion_text(reason),
        ],
    });
    let table = csv_table(&["collection", "n", "coefficient", "p_value", "excluded"], rows)?;
    ctx.write_bytes("census.csv", &table)?;
    let row = &census.row;
    println!(
        "census over {} collections: {} negative-significant, {} positive-significant at alpha {}; headline {:.1}% {}",
        row.total,
        row.significant_negative,
        row.significant_positive,
        census.alpha,
        row.headline_percent,
        if row.headline_positive { "positive" } else { "negative" },
    );
    Ok(ExitCode::SUCCESS)
}

fn exclusion_text(reason: &ExclusionReason) -> String {
    match reason {
        ExclusionReason::NoPredictorValues => "no predictor values".to_string(),
        ExclusionReason::TooFewPoints { found } => format!("too few points ({found})"),
        ExclusionReason::ConstantInput => "constant input".to_string(),
    }
}

pub fn compare_r2(ctx: &Ctx, alpha: f64, source: Option<&Path>) -> Result<ExitCode, CliError> {
    let snapshot = ctx.load_market(source)?;
    let report = variance_explained_comparison(&snapshot, alpha)?;
    ctx.write_json("r2.json", &report)?;
    let rows = report.per_collection.iter().map(|c| {
        vec![
            c.slug.clone(),
            c.n.to_string(),
            format!("{:.6}", c.rarity_r_squared),
            format!("{:.6}", c.distance_r_squared),
            match c.winner {
                Predictor::RarityRank => "rarity".to_string(),
                Predictor::VisualDistinctiveness => "distinctiveness".to_string(),
            },
        ]
    });
    let table = csv_table(
        &["collection", "n", "rarity_r_squared", "distance_r_squared", "winner"],
        rows,
    )?;
    ctx.write_bytes("r2.csv", &table)?;
    println!(
        "rarity explains more price variance in {} of {} collections ({:.1}%); distinctiveness in {} ({:.1}%); {} ties",
        report.rarity_wins,
        report.considered,
        report.rarity_share * 100.0,
        report.distance_wins,
        report.distance_share * 100.0,
        report.ties,
    );
    Ok(ExitCode::SUCCESS)
}

pub fn fixed_effect(ctx: &Ctx, source: Option<&Path>) -> Result<ExitCode, CliError> {
    let snapshot = ctx.load_market(source)?;
    let quantiles = rarity_quantiles(&snapshot.traits)?;
    let mut fits = BTreeMap::new();
    for (name, mode) in [
        ("multiplicative", FixedEffectMode::Multiplicative),
        ("additive", FixedEffectMode::Additive),
        ("none", FixedEffectMode::None),
    ] {
        let fit = fixed_effect_fit(&snapshot.transactions, &quantiles, mode)?;
        fits.insert(name, fit);
    }
    ctx.write_json("fixed_effect.json", &fits)?;
    let rows = fits.iter().map(|(name, fit)| {
        vec![
            name.to_string(),
            format!("{:.9}", fit.slope),
            format!("{:.9}", fit.intercept),
            format!("{:.9}", fit.r_squared),
            format!("{:.6e}", fit.p_value),
            fit.pooled_points.to_string(),
            fit.excluded_collections.to_string(),
        ]
    });
    let table = csv_table(
        &["mode", "slope", "intercept", "r_squared", "p_value", "pooled_points", "excluded_collections"],
        rows,
    )?;
    ctx.write_bytes("fixed_effect.csv", &table)?;
    for (name, fit) in &fits {
        println!(
            "{name}: slope {:+.4}, r2 {:.4}, p {:.3e}{}",
            fit.slope,
            fit.r_squared,
            fit.p_value,
            if fit.p_value < 0.01 { " (significant at 0.01)" } else { "" },
        );
    }
    Ok(ExitCode::SUCCESS)
}

/// Per-token mean sale price as a multiple of the collection's mean,
/// paired with the token's rarity quantile (small = rare).
fn rarity_price_points(
    snapshot: &MarketSnapshot,
) -> Result<BTreeMap<String, Vec<(f64, f64)>>, CliError> {
    let quantiles = rarity_quantiles(&snapshot.traits)?;
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
    for points in by_collection.values_mut() {
        let mean: f64 = points.iter().map(|&(_, p)| p).sum::<f64>() / points.len() as f64;
        if mean > 0.0 {
            for point in points.iter_mut() {
                point.1 /= mean;
            }
        } else {
            points.clear();
        }
    }
    by_collection.retain(|_, points| !points.is_empty());
    Ok(by_collection)
}

pub fn bins(ctx: &Ctx, k: usize, source: Option<&Path>) -> Result<ExitCode, CliError> {
    let snapshot = ctx.load_market(source)?;
    let by_collection = rarity_price_points(&snapshot)?;
    let mut summary: BTreeMap<String, Vec<QuantileBin>> = BTreeMap::new();
    let mut rows: Vec<Vec<String>> = Vec::new();
    let mut skipped = 0usize;
    for (slug, points) in &by_collection {
        if points.len() < k {
            skipped += 1;
            continue;
        }
        let (xs, ys): (Vec<f64>, Vec<f64>) = points.iter().copied().unzip();
        let binned = quantile_bins(&xs, &ys, k)?;
        let mut bars = Vec::new();
        for b in &binned {
            // tie runs stick to the lower bin, which can leave a bin empty
            let (mean_q, mean_ratio) = if b.count > 0 {
                (format!("{:.9}", b.mean_predictor), format!("{:.9}", b.mean_response))
            } else {
                (String::new(), String::new())
            };
            rows.push(vec![
                slug.clone(),
                b.index.to_string(),
                b.count.to_string(),
                mean_q,
                mean_ratio,
            ]);
            if b.count > 0 {
                bars.push((b.index.to_string(), b.mean_response));
            }
        }
        let svg = bar_chart(
            &format!("Mean price ratio by rarity-quantile bin: {slug}"),
            "bin (0 = rarest)",
            "price / collection mean",
            &bars,
        )?;
        ctx.write_bytes(&format!("bins-{}.svg", sanitize(slug)), svg.as_bytes())?;
        summary.insert(slug.clone(), binned);
    }
    if summary.is_empty() {
        return Err(format!("no collection has at least {k} priced tokens to bin").into());
    }
    let table = csv_table(
        &["collection", "bin", "count", "mean_quantile", "mean_price_ratio"],
        rows,
    )?;
    ctx.write_bytes("bins.csv", &table)?;
    ctx.write_json("bins.json", &summary)?;
    println!(
        "binned {} collections into {} rarity-quantile bins ({} skipped with fewer than {} priced tokens); one SVG per collection",
        summary.len(),
        k,
        skipped,
        k,
    );
    Ok(ExitCode::SUCCESS)
}

#[derive(Serialize)]
struct CensoredSummary {
    /// Orientation of the correlations below; positive means rarer sells
    /// for more.
    predictor: &'static str,
    censor_fraction: f64,
    full: CorrelationResult,
    censored: CorrelationResult,
}

pub fn censored(ctx: &Ctx, fraction: f64, source: Option<&Path>) -> Result<ExitCode, CliError> {
    let snapshot = ctx.load_market(source)?;
    let by_collection = rarity_price_points(&snapshot)?;

    // the censor drops the LARGEST predictor values, so rarity enters as
    // extremity 1 - q (largest = rarest)
    let mut pooled_x = Vec::new();
    let mut pooled_y = Vec::new();
    let mut rows: Vec<Vec<String>> = Vec::new();
    for (slug, points) in &by_collection {
        let xs: Vec<f64> = points.iter().map(|&(q, _)| 1.0 - q).collect();
        let ys: Vec<f64> = points.iter().map(|&(_, r)| r).collect();
        pooled_x.extend_from_slice(&xs);
        pooled_y.extend_from_slice(&ys);
        let full = pearson(&xs, &ys);
        let cens = censored_correlation(&xs, &ys, fraction);
        match (full, cens) {
            (Ok(full), Ok(cens)) => rows.push(vec![
                slug.clone(),
                xs.len().to_string(),
                format!("{:.6}", full.coefficient),
                format!("{:.6e}", full.p_value),
                format!("{:.6}", cens.coefficient),
                format!("{:.6e}", cens.p_value),
            ]),
            _ => rows.push(vec![
                slug.clone(),
                xs.len().to_string(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
            ]),
        }
    }
    let full = pearson(&pooled_x, &pooled_y)?;
    let censored = censored_correlation(&pooled_x, &pooled_y, fraction)?;
    ctx.write_json(
        "censored.json",
        &CensoredSummary {
            predictor: "rarity extremity (1 - quantile)",
            censor_fraction: fraction,
            full,
            censored,
        },
    )?;
    let table = csv_table(
        &["collection", "n", "full_coefficient", "full_p", "censored_coefficient", "censored_p"],
        rows,
    )?;
    ctx.write_bytes("censored.csv", &table)?;
    println!(
        "pooled rarity-price Pearson {:.4} (p {:.2e}) becomes {:.4} (p {:.2e}) after censoring the rarest {:.0}%",
        full.coefficient,
        full.p_value,
        censored.coefficient,
        censored.p_value,
        fraction * 100.0,
    );
    Ok(ExitCode::SUCCESS)
}

#[derive(Serialize)]
struct WashSummary {
    window_hours: i64,
    max_wallets: usize,
    min_trades: usize,
    flagged_windows: usize,
    flagged_tokens: usize,
    flagged_collections: usize,
}

pub fn wash(
    ctx: &Ctx,
    window_hours: i64,
    max_wallets: usize,
    min_trades: usize,
    source: Option<&Path>,
) -> Result<ExitCode, CliError> {
    let snapshot = ctx.load_market(source)?;
    let flags = detect_wash_trades(
        &snapshot.transactions,
        Duration::hours(window_hours),
        max_wallets,
        min_trades,
    );
    let tokens: std::collections::BTreeSet<(&str, &str)> = flags
        .iter()
        .map(|f| (f.collection.as_str(), f.token_id.as_str()))
        .collect();
    let collections: std::collections::BTreeSet<&str> =
        flags.iter().map(|f| f.collection.as_str()).collect();
    let summary = WashSummary {
        window_hours,
        max_wallets,
        min_trades,
        flagged_windows: flags.len(),
        flagged_tokens: tokens.len(),
        flagged_collections: collections.len(),
    };
    let rows = flags.iter().map(|f| {
        vec![
            f.collection.clone(),
            f.token_id.clone(),
            f.window_start.to_rfc3339(),
            f.trades.to_string(),
            f.distinct_wallets.to_string(),
        ]
    });
    let table = csv_table(
        &["collection", "token_id", "window_start", "trades", "distinct_wallets"],
        rows,
    )?;
    ctx.write_bytes("wash.csv", &table)?;
    ctx.write_json("wash.json", &summary)?;
    println!(
        "{} suspicious windows across {} tokens in {} collections ({}h window, <= {} wallets, >= {} trades)",
        summary.flagged_windows,
        summary.flagged_tokens,
        summary.flagged_collections,
        window_hours,
        max_wallets,
        min_trades,
    );
    Ok(ExitCode::SUCCESS)
}

pub fn select_case_studies(
    ctx: &Ctx,
    top_n: usize,
    alpha: f64,
    source: Option<&Path>,
) -> Result<ExitCode, CliError> {
    let snapshot = ctx.load_market(source)?;
    let config = CaseStudyConfig {
        top_n,
        alpha,
        ..CaseStudyConfig::default()
    };
    let selection = select_cases(&snapshot, &config)?;
    ctx.write_json("case_studies.json", &selection)?;
    let rows = selection
        .selected
        .iter()
        .enumerate()
        .map(|(i, slug)| vec![(i + 1).to_string(), slug.clone()]);
    let table = csv_table(&["rank", "collection"], rows)?;
    ctx.write_bytes("case_studies.csv", &table)?;
    for step in &selection.steps {
        println!("filter {}: kept {} (dropped {})", step.name, step.kept, step.dropped.len());
    }
    if selection.selected.is_empty() {
        println!("no collection survived every filter");
    } else {
        println!("selected: {}", selection.selected.join(", "));
    }
    Ok(ExitCode::SUCCESS)
}
