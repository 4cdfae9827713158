//! Market-wide correlation censuses: per collection, correlate a predictor
//! (rarity rank or visual distinctiveness) against sale behavior, then count
//! significant directions, compare variance explained, and pick case-study
//! collections.

use std::collections::{BTreeMap, BTreeSet};

use chrono::Duration;
use serde::{Deserialize, Serialize};

use crate::embeddings::{centroid, distinctiveness_scores};
use crate::model::{Category, MarketSnapshot};
use crate::money::Eth;
use crate::rarity::rarity_rank;

use super::correlate::{pearson, spearman, univariate_ols, CorrelationResult};
use super::wash::detect_wash_trades;
use super::StatsError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Predictor {
    RarityRank,
    VisualDistinctiveness,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CategoryFilter {
    All,
    Only(Category),
}

impl CategoryFilter {
    fn admits(&self, category: &Category) -> bool {
        match self {
            CategoryFilter::All => true,
            CategoryFilter::Only(wanted) => wanted == category,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResponseKind {
    AveragePrice,
    SaleCount,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExclusionReason {
    NoPredictorValues,
    TooFewPoints { found: usize },
    ConstantInput,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrelationOutcome {
    Included(CorrelationResult),
    Excluded(ExclusionReason),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollectionCorrelation {
    pub slug: String,
    pub outcome: CorrelationOutcome,
}

/// One headline census line: how many collections with the predictor showed
/// significant correlation in each direction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CensusRow {
    pub predictor: Predictor,
    pub filter: CategoryFilter,
    pub significant_positive: usize,
    pub significant_negative: usize,
    /// Collections passing the filter that have predictor values at all.
    pub total: usize,
    /// Share of the dominant direction, in percent of `total`.
    pub headline_percent: f64,
    pub headline_positive: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Census {
    pub row: CensusRow,
    pub response: ResponseKind,
    pub alpha: f64,
    pub details: Vec<CollectionCorrelation>,
}

/// Predictor value per token, per collection. Rarity uses the dense rank
/// (1 = rarest) as a float; distinctiveness is the distance from the
/// full-population centroid.
fn predictor_values(
    snapshot: &MarketSnapshot,
    predictor: Predictor,
) -> Result<BTreeMap<String, BTreeMap<String, f64>>, StatsError> {
    let mut values: BTreeMap<String, BTreeMap<String, f64>> = BTreeMap::new();
    match predictor {
        Predictor::RarityRank => {
            let mut grouped: BTreeMap<&str, Vec<crate::model::TokenTraits>> = BTreeMap::new();
            for record in &snapshot.traits {
                grouped
                    .entry(record.collection.as_str())
                    .or_default()
                    .push(record.clone());
            }
            for (slug, records) in grouped {
                let per_token = rarity_rank(&records)?
                    .into_iter()
                    .map(|score| (score.token_id, score.rank as f64))
                    .collect();
                values.insert(slug.to_string(), per_token);
            }
        }
        Predictor::VisualDistinctiveness => {
            let mut grouped: BTreeMap<&str, Vec<crate::model::EmbeddingRecord>> = BTreeMap::new();
            for record in &snapshot.embeddings {
                grouped
                    .entry(record.collection.as_str())
                    .or_default()
                    .push(record.clone());
            }
            for (slug, records) in grouped {
                // full-population centroid: deterministic, no sampling noise
                let center = centroid(&records, records.len(), 0)?;
                let per_token = distinctiveness_scores(&records, &center)?
                    .into_iter()
                    .map(|score| (score.token_id, score.distance))
                    .collect();
                values.insert(slug.to_string(), per_token);
            }
        }
    }
    Ok(values)
}

/// Mean sale price in ETH per token, per collection. Unsold tokens absent.
fn token_avg_prices(snapshot: &MarketSnapshot) -> BTreeMap<String, BTreeMap<String, f64>> {
    let mut sums: BTreeMap<(&str, &str), (f64, usize)> = BTreeMap::new();
    for tx in &snapshot.transactions {
        let entry = sums
            .entry((tx.collection.as_str(), tx.token_id.as_str()))
            .or_insert((0.0, 0));
        entry.0 += tx.price.to_f64();
        entry.1 += 1;
    }
    let mut out: BTreeMap<String, BTreeMap<String, f64>> = BTreeMap::new();
    for ((collection, token), (sum, n)) in sums {
        out.entry(collection.to_string())
            .or_default()
            .insert(token.to_string(), sum / n as f64);
    }
    out
}

fn token_sale_counts(snapshot: &MarketSnapshot) -> BTreeMap<String, BTreeMap<String, f64>> {
    let mut counts: BTreeMap<String, BTreeMap<String, f64>> = BTreeMap::new();
    for tx in &snapshot.transactions {
        *counts
            .entry(tx.collection.clone())
            .or_default()
            .entry(tx.token_id.clone())
            .or_insert(0.0) += 1.0;
    }
    counts
}

/// Pairs a collection's predictor values with its response values.
///
/// Sale prices exist only for sold tokens, so the price census correlates
/// over the sold subset; sale counts are defined for every token with a
/// predictor value (zero when never sold).
fn paired(
    preds: &BTreeMap<String, f64>,
    prices: Option<&BTreeMap<String, f64>>,
    counts: Option<&BTreeMap<String, f64>>,
    response: ResponseKind,
) -> (Vec<f64>, Vec<f64>) {
    let mut x = Vec::new();
    let mut y = Vec::new();
    match response {
        ResponseKind::AveragePrice => {
            if let Some(prices) = prices {
                for (token, &p) in preds {
                    if let Some(&price) = prices.get(token) {
                        x.push(p);
                        y.push(price);
                    }
                }
            }
        }
        ResponseKind::SaleCount => {
            for (token, &p) in preds {
                x.push(p);
                y.push(counts.and_then(|c| c.get(token)).copied().unwrap_or(0.0));
            }
        }
    }
    (x, y)
}

fn census_with_response(
    snapshot: &MarketSnapshot,
    predictor: Predictor,
    filter: CategoryFilter,
    alpha: f64,
    response: ResponseKind,
) -> Result<Census, StatsError> {
    let values = predictor_values(snapshot, predictor)?;
    let prices = token_avg_prices(snapshot);
    let counts = token_sale_counts(snapshot);

    let mut details = Vec::new();
    let mut total = 0usize;
    let mut positive = 0usize;
    let mut negative = 0usize;
    for collection in &snapshot.collections {
        if !filter.admits(&collection.category) {
            continue;
        }
        let slug = collection.slug.clone();
        let Some(preds) = values.get(&slug) else {
            details.push(CollectionCorrelation {
                slug,
                outcome: CorrelationOutcome::Excluded(ExclusionReason::NoPredictorValues),
            });
            continue;
        };
        total += 1;
        let (x, y) = paired(preds, prices.get(&slug), counts.get(&slug), response);
        let outcome = if x.len() < 3 {
            CorrelationOutcome::Excluded(ExclusionReason::TooFewPoints { found: x.len() })
        } else {
            match pearson(&x, &y) {
                Ok(result) => {
                    if result.p_value < alpha {
                        if result.coefficient > 0.0 {
                            positive += 1;
                        } else if result.coefficient < 0.0 {
                            negative += 1;
                        }
                    }
                    CorrelationOutcome::Included(result)
                }
                Err(StatsError::ConstantInput) => {
                    CorrelationOutcome::Excluded(ExclusionReason::ConstantInput)
                }
                Err(e) => return Err(e),
            }
        };
        details.push(CollectionCorrelation { slug, outcome });
    }

    let dominant = positive.max(negative);
    let row = CensusRow {
        predictor,
        filter,
        significant_positive: positive,
        significant_negative: negative,
        total,
        headline_percent: if total > 0 {
            100.0 * dominant as f64 / total as f64
        } else {
            0.0
        },
        headline_positive: positive > negative,
    };
    Ok(Census {
        row,
        response,
        alpha,
        details,
    })
}

/// Per-collection correlation of the predictor against mean sale price,
/// counted into significant-positive/negative at level `alpha`.
pub fn correlation_census(
    snapshot: &MarketSnapshot,
    predictor: Predictor,
    filter: CategoryFilter,
    alpha: f64,
) -> Result<Census, StatsError> {
    census_with_response(snapshot, predictor, filter, alpha, ResponseKind::AveragePrice)
}

/// Same census with the number of sales per token as the response.
pub fn sales_count_correlation(
    snapshot: &MarketSnapshot,
    predictor: Predictor,
    filter: CategoryFilter,
    alpha: f64,
) -> Result<Census, StatsError> {
    census_with_response(snapshot, predictor, filter, alpha, ResponseKind::SaleCount)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct R2Comparison {
    pub slug: String,
    pub n: usize,
    pub rarity_r_squared: f64,
    pub distance_r_squared: f64,
    pub winner: Predictor,
}

/// Outcome of re-running the comparison on Spearman coefficients for the
/// collections where distinctiveness won on r².
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpearmanTieBreak {
    /// Distance-won collections entering the protocol.
    pub candidates: usize,
    /// Candidates where at least one predictor's Spearman was significant.
    pub kept: usize,
    pub rarity_higher: usize,
    pub distance_higher: usize,
    /// Kept collections with equal magnitudes; kept = rarity + distance +
    /// residual always holds.
    pub residual: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    /// Collections with both predictors, prices, and a usable fit.
    pub considered: usize,
    pub rarity_wins: usize,
    pub distance_wins: usize,
    /// Exact r² ties, excluded from the shares.
    pub ties: usize,
    pub rarity_share: f64,
    pub distance_share: f64,
    pub per_collection: Vec<R2Comparison>,
    pub tie_break: SpearmanTieBreak,
}

/// Fits price against each predictor per collection, reports which explains
/// more variance, and re-ranks the distance-won collections by Spearman
/// magnitude.
pub fn variance_explained_comparison(
    snapshot: &MarketSnapshot,
    alpha: f64,
) -> Result<ComparisonReport, StatsError> {
    let ranks = predictor_values(snapshot, Predictor::RarityRank)?;
    let distances = predictor_values(snapshot, Predictor::VisualDistinctiveness)?;
    let prices = token_avg_prices(snapshot);

    let mut per_collection = Vec::new();
    let mut rarity_wins = 0usize;
    let mut distance_wins = 0usize;
    let mut ties = 0usize;
    let mut tie_break_inputs: Vec<(Vec<f64>, Vec<f64>, Vec<f64>)> = Vec::new();
    for collection in &snapshot.collections {
        let slug = &collection.slug;
        let (Some(rank_of), Some(dist_of), Some(price_of)) =
            (ranks.get(slug), distances.get(slug), prices.get(slug))
        else {
            continue;
        };
        let mut xr = Vec::new();
        let mut xd = Vec::new();
        let mut y = Vec::new();
        for (token, &rank) in rank_of {
            if let (Some(&dist), Some(&price)) = (dist_of.get(token), price_of.get(token)) {
                xr.push(rank);
                xd.push(dist);
                y.push(price);
            }
        }
        if y.len() < 3 {
            continue;
        }
        let (Ok(fit_r), Ok(fit_d)) = (univariate_ols(&xr, &y), univariate_ols(&xd, &y)) else {
            continue;
        };
        if fit_r.r_squared <= 0.0 && fit_d.r_squared <= 0.0 {
            continue;
        }
        let winner = if fit_r.r_squared > fit_d.r_squared {
            rarity_wins += 1;
            Predictor::RarityRank
        } else if fit_d.r_squared > fit_r.r_squared {
            distance_wins += 1;
            tie_break_inputs.push((xr.clone(), xd.clone(), y.clone()));
            Predictor::VisualDistinctiveness
        } else {
            ties += 1;
            per_collection.push(R2Comparison {
                slug: slug.clone(),
                n: y.len(),
                rarity_r_squared: fit_r.r_squared,
                distance_r_squared: fit_d.r_squared,
                winner: Predictor::RarityRank,
            });
            continue;
        };
        per_collection.push(R2Comparison {
            slug: slug.clone(),
            n: y.len(),
            rarity_r_squared: fit_r.r_squared,
            distance_r_squared: fit_d.r_squared,
            winner,
        });
    }

    let mut kept = 0usize;
    let mut rarity_higher = 0usize;
    let mut distance_higher = 0usize;
    for (xr, xd, y) in &tie_break_inputs {
        let (Ok(sr), Ok(sd)) = (spearman(xr, y), spearman(xd, y)) else {
            continue;
        };
        if sr.p_value > alpha && sd.p_value > alpha {
            continue;
        }
        kept += 1;
        if sr.coefficient.abs() > sd.coefficient.abs() {
            rarity_higher += 1;
        } else if sd.coefficient.abs() > sr.coefficient.abs() {
            distance_higher += 1;
        }
    }

    let decided = rarity_wins + distance_wins;
    Ok(ComparisonReport {
        considered: decided + ties,
        rarity_wins,
        distance_wins,
        ties,
        rarity_share: if decided > 0 {
            100.0 * rarity_wins as f64 / decided as f64
        } else {
            0.0
        },
        distance_share: if decided > 0 {
            100.0 * distance_wins as f64 / decided as f64
        } else {
            0.0
        },
        per_collection,
        tie_break: SpearmanTieBreak {
            candidates: tie_break_inputs.len(),
            kept,
            rarity_higher,
            distance_higher,
            residual: kept - rarity_higher - distance_higher,
        },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CaseStudyConfig {
    pub top_n: usize,
    pub alpha: f64,
    pub wash_window_hours: i64,
    pub wash_max_wallets: usize,
    pub wash_min_trades: usize,
    /// A collection is a wash-trading outlier when more than this share of
    /// its transactions sit on flagged tokens.
    pub max_wash_share: f64,
}

impl Default for CaseStudyConfig {
    fn default() -> CaseStudyConfig {
        CaseStudyConfig {
            top_n: 30,
            alpha: super::DEFAULT_ALPHA,
            wash_window_hours: 24,
            wash_max_wallets: super::wash::DEFAULT_WASH_MAX_WALLETS,
            wash_min_trades: super::wash::DEFAULT_WASH_MIN_TRADES,
            max_wash_share: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterStep {
    pub name: String,
    pub kept: usize,
    pub dropped: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseStudySelection {
    pub steps: Vec<FilterStep>,
    pub selected: Vec<String>,
}

fn is_significant(outcome: Option<&CorrelationOutcome>, alpha: f64) -> bool {
    matches!(
        outcome,
        Some(CorrelationOutcome::Included(r)) if r.p_value < alpha && r.coefficient != 0.0
    )
}

/// Narrows collections down for case studies: highest sales volume, rarity
/// ranks available, a significant price correlation with either predictor,
/// and no wash-trading dominance. Every filter reports what it dropped.
pub fn select_case_studies(
    snapshot: &MarketSnapshot,
    config: &CaseStudyConfig,
) -> Result<CaseStudySelection, StatsError> {
    let mut steps = Vec::new();

    let mut volume: BTreeMap<&str, Eth> = BTreeMap::new();
    for tx in &snapshot.transactions {
        let entry = volume.entry(tx.collection.as_str()).or_insert(Eth::ZERO);
        *entry = entry
            .checked_add(tx.price)
            .expect("sales volume fits in wei range");
    }
    let mut ranked: Vec<(&str, Eth)> = volume.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
    let cut: Vec<String> = ranked
        .iter()
        .skip(config.top_n)
        .map(|(slug, _)| slug.to_string())
        .collect();
    let mut current: Vec<String> = ranked
        .iter()
        .take(config.top_n)
        .map(|(slug, _)| slug.to_string())
        .collect();
    steps.push(FilterStep {
        name: "top_sales_volume".to_string(),
        kept: current.len(),
        dropped: cut,
    });

    let ranked_collections: BTreeSet<&str> = snapshot
        .traits
        .iter()
        .map(|t| t.collection.as_str())
        .collect();
    let (kept, dropped): (Vec<String>, Vec<String>) = current
        .into_iter()
        .partition(|slug| ranked_collections.contains(slug.as_str()));
    current = kept;
    steps.push(FilterStep {
        name: "has_rarity_ranks".to_string(),
        kept: current.len(),
        dropped,
    });

    let rarity = correlation_census(
        snapshot,
        Predictor::RarityRank,
        CategoryFilter::All,
        config.alpha,
    )?;
    let distance = correlation_census(
        snapshot,
        Predictor::VisualDistinctiveness,
        CategoryFilter::All,
        config.alpha,
    )?;
    let outcome_of = |census: &Census, slug: &str| -> Option<CorrelationOutcome> {
        census
            .details
            .iter()
            .find(|d| d.slug == slug)
            .map(|d| d.outcome.clone())
    };
    let (kept, dropped): (Vec<String>, Vec<String>) = current.into_iter().partition(|slug| {
        is_significant(outcome_of(&rarity, slug).as_ref(), config.alpha)
            || is_significant(outcome_of(&distance, slug).as_ref(), config.alpha)
    });
    current = kept;
    steps.push(FilterStep {
        name: "significant_price_correlation".to_string(),
        kept: current.len(),
        dropped,
    });

    let flags = detect_wash_trades(
        &snapshot.transactions,
        Duration::hours(config.wash_window_hours),
        config.wash_max_wallets,
        config.wash_min_trades,
    );
    let mut flagged_tokens: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    for flag in &flags {
        flagged_tokens
            .entry(flag.collection.as_str())
            .or_default()
            .insert(flag.token_id.as_str());
    }
    let mut tx_totals: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    for tx in &snapshot.transactions {
        let entry = tx_totals.entry(tx.collection.as_str()).or_insert((0, 0));
        entry.0 += 1;
        let washy = flagged_tokens
            .get(tx.collection.as_str())
            .is_some_and(|tokens| tokens.contains(tx.token_id.as_str()));
        if washy {
            entry.1 += 1;
        }
    }
    let (kept, dropped): (Vec<String>, Vec<String>) = current.into_iter().partition(|slug| {
        let (total, washed) = tx_totals.get(slug.as_str()).copied().unwrap_or((0, 0));
        total == 0 || (washed as f64 / total as f64) <= config.max_wash_share
    });
    current = kept;
    steps.push(FilterStep {
        name: "wash_trading_share".to_string(),
        kept: current.len(),
        dropped,
    });

    Ok(CaseStudySelection {
        steps,
        selected: current,
    })
}
