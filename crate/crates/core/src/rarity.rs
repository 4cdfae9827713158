//! Trait frequencies, information content, and dense rarity ranks.
//!
//! Tokens are ranked first by how many of their traits are one-of-ones in
//! the collection, then by total information content. Equal keys share a
//! dense rank, so ranks run contiguously from 1.

use std::collections::{BTreeMap, HashMap};

use thiserror::Error;

use crate::model::TokenTraits;

#[derive(Debug, Error, PartialEq)]
pub enum RarityError {
    #[error("expected traits for collection {expected:?}, found {found:?}")]
    MixedCollections { expected: String, found: String },
    #[error("trait ({name:?}, {value:?}) missing from frequency table")]
    UnknownTrait { name: String, value: String },
    #[error("empty trait table")]
    EmptyInput,
}

/// Occurrence counts for every (trait name, trait value) pair in one
/// collection. `population` counts distinct tokens with trait data.
#[derive(Debug, Clone, PartialEq)]
pub struct TraitFrequencyTable {
    pub collection: String,
    pub counts: BTreeMap<(String, String), u64>,
    pub population: u64,
}

impl TraitFrequencyTable {
    pub fn count(&self, name: &str, value: &str) -> Option<u64> {
        self.counts.get(&(name.to_string(), value.to_string())).copied()
    }

    /// Fraction of the population sharing this trait value.
    pub fn frequency(&self, name: &str, value: &str) -> Option<f64> {
        self.count(name, value).map(|c| c as f64 / self.population as f64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RarityScore {
    pub token_id: String,
    pub one_of_one_count: u64,
    pub information_content: f64,
    /// Dense rank; 1 is rarest.
    pub rank: u64,
}

/// Counts trait-value occurrences across one collection's tokens.
/// Duplicate (collection, token_id) records are counted once (first wins),
/// mirroring snapshot uniqueness.
pub fn trait_frequencies(records: &[TokenTraits]) -> Result<TraitFrequencyTable, RarityError> {
    let collection = records
        .first()
        .map(|r| r.collection.clone())
        .unwrap_or_default();
    let mut counts: BTreeMap<(String, String), u64> = BTreeMap::new();
    let mut seen_tokens: HashMap<&str, ()> = HashMap::new();
    for record in records {
        if record.collection != collection {
            return Err(RarityError::MixedCollections {
                expected: collection,
                found: record.collection.clone(),
            });
        }
        if seen_tokens.insert(&record.token_id, ()).is_some() {
            continue;
        }
        for (name, value) in &record.traits {
            *counts.entry((name.clone(), value.clone())).or_insert(0) += 1;
        }
    }
    Ok(TraitFrequencyTable {
        collection,
        counts,
        population: seen_tokens.len() as u64,
    })
}

/// Sum of −log2(count / population) over the token's traits, in bits.
/// A trait category the token lacks contributes nothing.
///
/// Terms are summed over the sorted counts so that tokens with identical
/// count multisets get bit-identical totals and tie exactly in the ranking,
/// regardless of which trait names carry which count.
pub fn information_content(
    token: &TokenTraits,
    freq: &TraitFrequencyTable,
) -> Result<f64, RarityError> {
    let mut counts = Vec::with_capacity(token.traits.len());
    for (name, value) in &token.traits {
        counts.push(
            freq.count(name, value)
                .ok_or_else(|| RarityError::UnknownTrait {
                    name: name.clone(),
                    value: value.clone(),
                })?,
        );
    }
    counts.sort_unstable();
    Ok(counts
        .iter()
        .map(|&c| -((c as f64 / freq.population as f64).log2()))
        .sum())
}

/// Ranks all tokens of one collection. Dense ranking on the key
/// (one_of_one_count desc, information_content desc); ties share a rank.
pub fn rarity_rank(records: &[TokenTraits]) -> Result<Vec<RarityScore>, RarityError> {
    if records.is_empty() {
        return Err(RarityError::EmptyInput);
    }
    let freq = trait_frequencies(records)?;

    let mut seen: HashMap<&str, ()> = HashMap::new();
    let mut scored: Vec<RarityScore> = Vec::with_capacity(records.len());
    for record in records {
        if seen.insert(&record.token_id, ()).is_some() {
            continue;
        }
        let one_of_ones = record
            .traits
            .iter()
            .filter(|(name, value)| freq.count(name, value) == Some(1))
            .count() as u64;
        let ic = information_content(record, &freq)?;
        scored.push(RarityScore {
            token_id: record.token_id.clone(),
            one_of_one_count: one_of_ones,
            information_content: ic,
            rank: 0,
        });
    }

    // Sort indices by key so input order never leaks into ranks; token_id is
    // only an arbiter between fully tied keys and does not affect the rank.
    let mut order: Vec<usize> = (0..scored.len()).collect();
    order.sort_by(|&a, &b| {
        rank_key_cmp(&scored[a], &scored[b]).then_with(|| scored[a].token_id.cmp(&scored[b].token_id))
    });

    let mut rank = 0u64;
    let mut prev: Option<usize> = None;
    for &i in &order {
        let tied = prev.is_some_and(|p| rank_key_cmp(&scored[p], &scored[i]).is_eq());
        if !tied {
            rank += 1;
        }
        scored[i].rank = rank;
        prev = Some(i);
    }
    Ok(scored)
}

fn rank_key_cmp(a: &RarityScore, b: &RarityScore) -> std::cmp::Ordering {
    b.one_of_one_count
        .cmp(&a.one_of_one_count)
        .then_with(|| {
            b.information_content
                .partial_cmp(&a.information_content)
                .expect("information content is finite")
        })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::TokenTraits;

    fn token(id: &str, pairs: &[(&str, &str)]) -> TokenTraits {
        TokenTraits {
            collection: "c".to_string(),
            token_id: id.to_string(),
            traits: pairs
                .iter()
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .collect(),
        }
    }

    #[test]
    fn single_token_single_trait() {
        let records = vec![token("1", &[("Hat", "Red")])];
        let freq = trait_frequencies(&records).unwrap();
        assert_eq!(freq.population, 1);
        assert_eq!(freq.count("Hat", "Red"), Some(1));
        let ranks = rarity_rank(&records).unwrap();
        assert_eq!(ranks[0].rank, 1);
        assert_eq!(ranks[0].one_of_one_count, 1);
    }

    #[test]
    fn three_token_fixture_counts_and_ranks() {
        let records = vec![
            token("1", &[("A", "x"), ("B", "u")]),
            token("2", &[("A", "x"), ("B", "v")]),
            token("3", &[("A", "y"), ("B", "v")]),
        ];
        let freq = trait_frequencies(&records).unwrap();
        assert_eq!(freq.count("A", "x"), Some(2));
        assert_eq!(freq.count("A", "y"), Some(1));
        assert_eq!(freq.count("B", "u"), Some(1));
        assert_eq!(freq.count("B", "v"), Some(2));
        assert_eq!(freq.population, 3);

        // -log2(1/3) - log2(1/3) for the token with two one-in-three traits
        let ic = information_content(&token("3", &[("A", "y"), ("B", "v")]), &freq).unwrap();
        let expected = -(1.0f64 / 3.0).log2() - (2.0f64 / 3.0).log2();
        assert!((ic - expected).abs() < 1e-12);

        let ranks = rarity_rank(&records).unwrap();
        let by_id: std::collections::HashMap<_, _> =
            ranks.iter().map(|r| (r.token_id.as_str(), r)).collect();
        // tokens 1 and 3 each hold one one-of-one trait with equal IC
        assert_eq!(by_id["1"].rank, 1);
        assert_eq!(by_id["3"].rank, 1);
        assert_eq!(by_id["2"].rank, 2);
        assert!((by_id["1"].information_content - by_id["3"].information_content).abs() < 1e-12);
        // each rank-1 token: one 1-of-3 trait and one 2-of-3 trait, 2.1699 bits
        assert!((by_id["1"].information_content - 2.169925001442312).abs() < 1e-9);
    }

    #[test]
    fn hand_ic_for_two_one_third_traits() {
        let records = vec![
            token("1", &[("A", "x"), ("B", "u")]),
            token("2", &[("A", "x"), ("B", "v")]),
            token("3", &[("A", "y"), ("B", "v")]),
        ];
        let freq = trait_frequencies(&records).unwrap();
        let probe = token("probe", &[("A", "y"), ("B", "u")]);
        let ic = information_content(&probe, &freq).unwrap();
        assert!((ic - 3.169925001442312).abs() < 1e-9);
    }

    #[test]
    fn missing_trait_category_contributes_nothing() {
        let records = vec![
            token("1", &[("A", "x"), ("B", "u")]),
            token("2", &[("A", "x")]),
        ];
        let freq = trait_frequencies(&records).unwrap();
        let ic_partial = information_content(&records[1], &freq).unwrap();
        assert!((ic_partial - -(2.0f64 / 2.0).log2()).abs() < 1e-12);
        assert_eq!(ic_partial, 0.0);
    }

    #[test]
    fn unknown_trait_is_an_error() {
        let records = vec![token("1", &[("A", "x")])];
        let freq = trait_frequencies(&records).unwrap();
        let probe = token("p", &[("A", "zzz")]);
        assert!(matches!(
            information_content(&probe, &freq),
            Err(RarityError::UnknownTrait { .. })
        ));
    }

    #[test]
    fn mixed_collections_rejected() {
        let mut records = vec![token("1", &[("A", "x")])];
        records.push(TokenTraits {
            collection: "other".to_string(),
            ..token("2", &[("A", "x")])
        });
        assert!(matches!(
            trait_frequencies(&records),
            Err(RarityError::MixedCollections { .. })
        ));
    }

    #[test]
    fn empty_input_rejected() {
        assert_eq!(rarity_rank(&[]), Err(RarityError::EmptyInput));
    }
}
