//! Pooled regression of sale price on rarity quantile, controlling each
//! collection's level either multiplicatively (divide by the collection
//! mean), additively (subtract it), or not at all.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::model::{TokenTraits, Transaction};
use crate::rarity::rarity_rank;

use super::correlate::{pearson, univariate_ols};
use super::StatsError;

/// Collections whose mean sale price falls below this are treated as
/// outliers and excluded from the pooled fit.
pub const MIN_COLLECTION_MEAN_ETH: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FixedEffectMode {
    Multiplicative,
    Additive,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedEffectFit {
    pub mode: FixedEffectMode,
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub p_value: f64,
    /// Collections dropped for a mean sale price below the outlier floor.
    pub excluded_collections: usize,
    pub pooled_points: usize,
}

/// Rarity quantiles q = dense rank / token count per collection, keyed by
/// (collection, token id). Small q means rare.
pub fn rarity_quantiles(
    traits: &[TokenTraits],
) -> Result<BTreeMap<(String, String), f64>, StatsError> {
    let mut by_collection: BTreeMap<&str, Vec<TokenTraits>> = BTreeMap::new();
    for record in traits {
        by_collection
            .entry(record.collection.as_str())
            .or_default()
            .push(record.clone());
    }
    let mut quantiles = BTreeMap::new();
    for (slug, records) in by_collection {
        let population = records.len() as f64;
        for score in rarity_rank(&records)? {
            quantiles.insert(
                (slug.to_string(), score.token_id),
                score.rank as f64 / population,
            );
        }
    }
    Ok(quantiles)
}

/// Mean sale price in ETH per (collection, token id).
fn token_mean_prices(transactions: &[Transaction]) -> BTreeMap<(String, String), f64> {
    let mut sums: BTreeMap<(&str, &str), (f64, usize)> = BTreeMap::new();
    for tx in transactions {
        let entry = sums
            .entry((tx.collection.as_str(), tx.token_id.as_str()))
            .or_insert((0.0, 0));
        entry.0 += tx.price.to_f64();
        entry.1 += 1;
    }
    sums.into_iter()
        .map(|((c, t), (sum, n))| ((c.to_string(), t.to_string()), sum / n as f64))
        .collect()
}

/// Pools every token with both a mean sale price and a rarity quantile,
/// normalizes prices per collection according to `mode`, and regresses the
/// normalized price on the quantile.
pub fn fixed_effect_fit(
    transactions: &[Transaction],
    quantiles: &BTreeMap<(String, String), f64>,
    mode: FixedEffectMode,
) -> Result<FixedEffectFit, StatsError> {
    let prices = token_mean_prices(transactions);

    // group the regression sample by collection to compute its fixed effect
    let mut grouped: BTreeMap<&str, Vec<(f64, f64)>> = BTreeMap::new();
    for ((collection, token), price) in &prices {
        if let Some(&q) = quantiles.get(&(collection.clone(), token.clone())) {
            grouped
                .entry(collection.as_str())
                .or_default()
                .push((q, *price));
        }
    }

    let mut x = Vec::new();
    let mut y = Vec::new();
    let mut excluded = 0usize;
    for points in grouped.values() {
        let mean = points.iter().map(|&(_, p)| p).sum::<f64>() / points.len() as f64;
        if mean < MIN_COLLECTION_MEAN_ETH {
            excluded += 1;
            continue;
        }
        for &(q, p) in points {
            x.push(q);
            y.push(match mode {
                FixedEffectMode::Multiplicative => p / mean,
                FixedEffectMode::Additive => p - mean,
                FixedEffectMode::None => p,
            });
        }
    }
    if x.len() < 3 {
        return Err(StatsError::TooFewPoints {
            required: 3,
            found: x.len(),
        });
    }

    let fit = univariate_ols(&x, &y)?;
    let p_value = match pearson(&x, &y) {
        Ok(r) => r.p_value,
        // a flat response carries no relationship to test
        Err(StatsError::ConstantInput) => 1.0,
        Err(e) => return Err(e),
    };
    Ok(FixedEffectFit {
        mode,
        slope: fit.slope,
        intercept: fit.intercept,
        r_squared: fit.r_squared,
        p_value,
        excluded_collections: excluded,
        pooled_points: x.len(),
    })
}
