//! Analytics toolkit for conspicuous-goods markets.
//!
//! Ingests market snapshots (collections, holdings, traits, transactions,
//! image embeddings), builds the wallet/collection ownership graph, trains a
//! small graph convolutional floor-price predictor, scores token rarity and
//! visual distinctiveness, runs the correlation/regression statistics suite,
//! and numerically solves a conspicuous-consumption equilibrium model.

pub mod embeddings;
pub mod gcn;
pub mod graph;
pub mod ingest;
pub mod model;
pub mod money;
pub mod pipeline;
pub mod plot;
pub mod rarity;
pub mod sim;
pub mod stats;
pub mod synth;

/// Derives a child seed from a base seed and a salt, so independent
/// sub-experiments replay identically regardless of scheduling.
pub fn derive_seed(base: u64, salt: u64) -> u64 {
    // splitmix64 step
    let mut z = base
        .wrapping_add(0x9e3779b97f4a7c15)
        .wrapping_add(salt.wrapping_mul(0xbf58476d1ce4e5b9));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}
