//! Synthetic market generator with planted, recoverable effects.
//!
//! Three structures are planted: community-shaped ownership (wallets hold
//! disproportionately inside their own community), floor prices that rise
//! with normalized holder affinity mass, and sale prices that fall
//! multiplicatively with rarity quantile in a configured share of
//! collections. PlantedTruth records every planted coefficient so
//! recovery tests have exact targets. Generation is single-threaded and
//! each table draws from its own derived seed, so reruns are
//! byte-identical and editing one table's recipe leaves the others alone.

use std::collections::{BTreeMap, BTreeSet};

use chrono::{Duration, TimeZone, Utc};
use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::derive_seed;
use crate::graph::{build_ownership_graph, compute_wallet_metrics};
use crate::model::{
    Address, Category, Collection, EmbeddingRecord, Holding, MarketSnapshot, TokenTraits,
    Transaction, EMBEDDING_DIM,
};
use crate::money::Eth;
use crate::stats::rarity_quantiles;

const SALT_HOLDINGS: u64 = 1;
const SALT_TRAITS: u64 = 2;
const SALT_MEANS: u64 = 3;
const SALT_SNOB: u64 = 4;
const SALT_PRICES: u64 = 5;
const SALT_EMBEDDINGS: u64 = 6;
const SALT_FLOORS: u64 = 7;

/// Quantile threshold below which the optional tail boost applies.
const TAIL_QUANTILE: f64 = 0.1;

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("infeasible config: {0}")]
    InfeasibleConfig(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub collections: usize,
    pub tokens_per_collection: usize,
    pub wallets: usize,
    /// Number of communities wallets and collections are split into.
    pub communities: usize,
    /// Ratio of intra- to inter-community holding probability.
    pub community_boost: f64,
    /// Floor sensitivity: floor = base × (1 + strength × affinity mass).
    pub bandwagon_strength: f64,
    /// Multiplicative price-rarity strength s in mean·(1 + s·(1/2 − q)).
    pub snob_strength: f64,
    /// Share of collections that receive the snob effect.
    pub snob_share: f64,
    /// Extra price multiplier fading linearly across the rarest decile.
    pub snob_tail_boost: f64,
    /// Standard deviation of each embedding cluster around its center.
    pub embedding_spread: f64,
    /// Vocabulary size per trait category; values are drawn with
    /// harmonic weights so every category has a long tail of rare values.
    pub trait_vocab: Vec<usize>,
    pub sales_per_token: usize,
    /// Log-standard-deviation of multiplicative noise per sale price.
    pub price_noise: f64,
    /// Log-standard-deviation of multiplicative noise per floor price.
    pub floor_noise: f64,
    /// Median floor price in ETH before the bandwagon response.
    pub base_floor: f64,
    /// Log-standard-deviation of per-collection mean sale prices. Large
    /// values spread collection scales over orders of magnitude, which is
    /// what makes the additive fit vanish while the multiplicative fit
    /// stays exact.
    pub collection_mean_sigma: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> SynthConfig {
        SynthConfig {
            collections: 50,
            tokens_per_collection: 200,
            wallets: 2000,
            communities: 4,
            community_boost: 4.0,
            bandwagon_strength: 1.0,
            snob_strength: 0.5,
            snob_share: 0.7,
            snob_tail_boost: 0.0,
            embedding_spread: 0.5,
            trait_vocab: vec![12, 9, 7, 5],
            sales_per_token: 3,
            price_noise: 0.05,
            floor_noise: 0.1,
            base_floor: 0.2,
            collection_mean_sigma: 3.0,
            seed: 7,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |msg: String| Err(SynthError::InfeasibleConfig(msg));
        if self.collections == 0
            || self.tokens_per_collection == 0
            || self.wallets == 0
            || self.sales_per_token == 0
        {
            return bad("counts must be positive".to_string());
        }
        if self.communities == 0 {
            return bad("at least one community is required".to_string());
        }
        if self.communities > self.wallets {
            return bad(format!(
                "{} communities cannot be filled by {} wallets",
                self.communities, self.wallets
            ));
        }
        if !(self.community_boost >= 1.0) || !self.community_boost.is_finite() {
            return bad("community_boost must be at least 1".to_string());
        }
        if !(0.0..=1.0).contains(&self.snob_share) {
            return bad("snob_share must lie in [0, 1]".to_string());
        }
        if !(self.snob_strength >= 0.0) || self.snob_strength >= 2.0 {
            return bad("snob_strength must lie in [0, 2) to keep prices positive".to_string());
        }
        for (name, v) in [
            ("bandwagon_strength", self.bandwagon_strength),
            ("snob_tail_boost", self.snob_tail_boost),
            ("embedding_spread", self.embedding_spread),
            ("price_noise", self.price_noise),
            ("floor_noise", self.floor_noise),
            ("collection_mean_sigma", self.collection_mean_sigma),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return bad(format!("{name} must be finite and non-negative"));
            }
        }
        if !(self.base_floor > 0.0) || !self.base_floor.is_finite() {
            return bad("base_floor must be positive".to_string());
        }
        if self.trait_vocab.is_empty() || self.trait_vocab.iter().any(|&v| v == 0) {
            return bad("trait_vocab needs at least one non-empty category".to_string());
        }
        Ok(())
    }
}

/// Every planted coefficient, recorded for later recovery tests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedTruth {
    pub seed: u64,
    /// Community id per wallet, indexed like the generated addresses.
    pub wallet_community: Vec<usize>,
    pub collection_community: Vec<usize>,
    /// Planted mean sale price in ETH per collection.
    pub collection_mean_eth: BTreeMap<String, f64>,
    /// Planted multiplicative strength per collection; 0 where absent.
    pub snob_strength: BTreeMap<String, f64>,
    pub bandwagon_strength: f64,
    /// Normalized holder affinity mass per collection, as used for floors.
    pub affinity_mass: BTreeMap<String, f64>,
    /// Final floor price in ETH per collection.
    pub floor_eth: BTreeMap<String, f64>,
}

fn harmonic_draw(rng: &mut StdRng, vocab: usize) -> usize {
    let total: f64 = (0..vocab).map(|j| 1.0 / (j + 1) as f64).sum();
    let mut u = rng.gen::<f64>() * total;
    for j in 0..vocab {
        u -= 1.0 / (j + 1) as f64;
        if u <= 0.0 {
            return j;
        }
    }
    vocab - 1
}

const CATEGORY_CYCLE: [Category; 4] = [
    Category::Pfp,
    Category::Art,
    Category::Gaming,
    Category::Collectibles,
];

/// Generates a full snapshot plus the coefficients planted into it. The
/// snapshot passes validate_snapshot with zero violations.
pub fn generate_market(config: &SynthConfig) -> Result<(MarketSnapshot, PlantedTruth), SynthError> {
    config.validate()?;
    let k = config.communities;
    let n_tokens = config.tokens_per_collection;
    let wallets: Vec<Address> = (0..config.wallets)
        .map(|i| Address::new(&format!("0x{i:040x}")))
        .collect();
    let wallet_community: Vec<usize> = (0..config.wallets).map(|i| i % k).collect();
    let collection_community: Vec<usize> = (0..config.collections).map(|i| i % k).collect();
    let slugs: Vec<String> = (0..config.collections).map(|i| format!("col-{i:03}")).collect();
    let snapshot_time = Utc.with_ymd_and_hms(2025, 6, 1, 0, 0, 0).unwrap();

    // ownership: each token gets one owner, drawn from the collection's
    // community at a rate that makes the per-wallet intra/inter holding
    // probability ratio equal community_boost
    let rho = (config.community_boost - 1.0) / (config.community_boost - 1.0 + k as f64);
    let mut rng = StdRng::seed_from_u64(derive_seed(config.seed, SALT_HOLDINGS));
    let mut holdings = Vec::with_capacity(config.collections * n_tokens);
    for (c, slug) in slugs.iter().enumerate() {
        let g = collection_community[c];
        let intra: Vec<usize> = (0..config.wallets).filter(|w| w % k == g).collect();
        for t in 0..n_tokens {
            let owner = if rng.gen::<f64>() < rho {
                intra[rng.gen_range(0..intra.len())]
            } else {
                rng.gen_range(0..config.wallets)
            };
            holdings.push(Holding {
                wallet: wallets[owner].clone(),
                collection: slug.clone(),
                token_id: t.to_string(),
            });
        }
    }

    let mut rng = StdRng::seed_from_u64(derive_seed(config.seed, SALT_TRAITS));
    let mut traits = Vec::with_capacity(config.collections * n_tokens);
    for slug in &slugs {
        for t in 0..n_tokens {
            let mut map = BTreeMap::new();
            for (cat, &vocab) in config.trait_vocab.iter().enumerate() {
                let value = harmonic_draw(&mut rng, vocab);
                map.insert(format!("cat{cat}"), format!("v{value}"));
            }
            traits.push(TokenTraits {
                collection: slug.clone(),
                token_id: t.to_string(),
                traits: map,
            });
        }
    }
    let quantiles = rarity_quantiles(&traits).expect("every generated collection has traits");

    let mut rng = StdRng::seed_from_u64(derive_seed(config.seed, SALT_MEANS));
    let ln_mean = Normal::new(0.15_f64.ln(), config.collection_mean_sigma)
        .expect("validated sigma is non-negative");
    let means: Vec<f64> = (0..config.collections)
        .map(|_| ln_mean.sample(&mut rng).exp())
        .collect();

    let mut rng = StdRng::seed_from_u64(derive_seed(config.seed, SALT_SNOB));
    let mut ids: Vec<usize> = (0..config.collections).collect();
    ids.shuffle(&mut rng);
    let snob_count = (config.snob_share * config.collections as f64).round() as usize;
    let snob: BTreeSet<usize> = ids.into_iter().take(snob_count).collect();

    let mut rng = StdRng::seed_from_u64(derive_seed(config.seed, SALT_PRICES));
    let price_noise = (config.price_noise > 0.0)
        .then(|| Normal::new(0.0, config.price_noise).expect("validated noise is non-negative"));
    let mut transactions = Vec::with_capacity(config.collections * n_tokens * config.sales_per_token);
    for (c, slug) in slugs.iter().enumerate() {
        let s = if snob.contains(&c) { config.snob_strength } else { 0.0 };
        for t in 0..n_tokens {
            let q = quantiles[&(slug.clone(), t.to_string())];
            let mut level = means[c] * (1.0 + s * (0.5 - q));
            if config.snob_tail_boost > 0.0 && q <= TAIL_QUANTILE {
                level *= 1.0 + config.snob_tail_boost * (TAIL_QUANTILE - q) / TAIL_QUANTILE;
            }
            for sale in 0..config.sales_per_token {
                let factor = price_noise.as_ref().map_or(1.0, |n| n.sample(&mut rng).exp());
                let buyer = rng.gen_range(0..config.wallets);
                let seller = (buyer + rng.gen_range(1..config.wallets.max(2))) % config.wallets;
                // sales of one token sit 25 hours apart, so no token can
                // accumulate enough trades in a day to look wash-traded
                let minutes = (sale * 25 * 60 + (t % 28) * 37 + c * 17) as i64;
                transactions.push(Transaction {
                    collection: slug.clone(),
                    token_id: t.to_string(),
                    price: Eth::from_f64_lossy(level * factor),
                    timestamp: snapshot_time - Duration::minutes(90 * 24 * 60 - minutes),
                    buyer: wallets[buyer].clone(),
                    seller: wallets[seller].clone(),
                });
            }
        }
    }

    let mut rng = StdRng::seed_from_u64(derive_seed(config.seed, SALT_EMBEDDINGS));
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    let mut embeddings = Vec::with_capacity(config.collections * n_tokens);
    for slug in &slugs {
        let center: Vec<f64> = (0..EMBEDDING_DIM).map(|_| unit.sample(&mut rng)).collect();
        for t in 0..n_tokens {
            let vector: Vec<f32> = center
                .iter()
                .map(|&m| (m + config.embedding_spread * unit.sample(&mut rng)) as f32)
                .collect();
            embeddings.push(EmbeddingRecord {
                collection: slug.clone(),
                token_id: t.to_string(),
                vector,
            });
        }
    }

    // floors respond to realized affinity mass, normalized to [0, 1]
    let graph = build_ownership_graph(&holdings);
    let metrics =
        compute_wallet_metrics(&graph, |_| Some(Eth::ZERO)).expect("floors stubbed for all");
    let mut raw_mass: BTreeMap<String, f64> = BTreeMap::new();
    for slug in &slugs {
        let ix = graph.collection_ix(slug).expect("every collection has holders");
        let mass: f64 = graph
            .collection_neighbors(ix)
            .iter()
            .map(|&w| metrics.affinity[w as usize] as f64)
            .sum();
        raw_mass.insert(slug.clone(), mass);
    }
    let max_mass = raw_mass.values().cloned().fold(0.0, f64::max);
    let affinity_mass: BTreeMap<String, f64> = raw_mass
        .into_iter()
        .map(|(slug, m)| (slug, if max_mass > 0.0 { m / max_mass } else { 0.0 }))
        .collect();

    let mut rng = StdRng::seed_from_u64(derive_seed(config.seed, SALT_FLOORS));
    let floor_noise = (config.floor_noise > 0.0)
        .then(|| Normal::new(0.0, config.floor_noise).expect("validated noise is non-negative"));
    let mut floor_eth = BTreeMap::new();
    for slug in &slugs {
        let factor = floor_noise.as_ref().map_or(1.0, |n| n.sample(&mut rng).exp());
        let floor = config.base_floor
            * (1.0 + config.bandwagon_strength * affinity_mass[slug])
            * factor;
        floor_eth.insert(slug.clone(), floor);
    }

    let collections: Vec<Collection> = slugs
        .iter()
        .enumerate()
        .map(|(i, slug)| Collection {
            slug: slug.clone(),
            floor_price: Eth::from_f64_lossy(floor_eth[slug]),
            category: CATEGORY_CYCLE[i % CATEGORY_CYCLE.len()].clone(),
            created_at: snapshot_time - Duration::days(365 + i as i64),
            total_supply: n_tokens as u64,
        })
        .collect();

    let truth = PlantedTruth {
        seed: config.seed,
        wallet_community,
        collection_community,
        collection_mean_eth: slugs
            .iter()
            .zip(&means)
            .map(|(slug, &m)| (slug.clone(), m))
            .collect(),
        snob_strength: slugs
            .iter()
            .enumerate()
            .map(|(c, slug)| {
                let s = if snob.contains(&c) { config.snob_strength } else { 0.0 };
                (slug.clone(), s)
            })
            .collect(),
        bandwagon_strength: config.bandwagon_strength,
        affinity_mass,
        floor_eth,
    };
    let snapshot = MarketSnapshot {
        collections,
        holdings,
        traits,
        transactions,
        embeddings,
        snapshot_time,
    };
    Ok((snapshot, truth))
}
