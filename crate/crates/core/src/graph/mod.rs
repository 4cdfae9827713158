//! Ownership bipartite graph and wallet metrics.
//!
//! Nodes are wallets and collections; an edge exists iff the wallet holds at
//! least one token of the collection, regardless of how many. The base graph
//! is immutable after construction; experiments that modify edges do so
//! through copy-on-write overlays.

mod perturb;
mod split;

use std::collections::{BTreeSet, HashMap};

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::model::{Address, Holding};
use crate::money::Eth;

pub use perturb::{
    perturb_edges, remove_bottom_percentile, GraphOverlay, PerturbMode, PerturbWeighting,
    PerturbationSample,
};
pub use split::{split_subgraphs, SplitOptions, Subgraph, SubgraphSplit};

/// Index into [`OwnershipGraph::wallets`].
pub type WalletIx = u32;
/// Index into [`OwnershipGraph::collections`].
pub type CollectionIx = u32;

#[derive(Debug, Error, PartialEq)]
pub enum GraphError {
    #[error("no floor price for collection {0:?}")]
    MissingFloorPrice(String),
    #[error("unknown collection {0:?}")]
    UnknownCollection(String),
    #[error("collection {0:?} has no neighbor wallets")]
    NoNeighbors(String),
    #[error("no candidate wallets for {mode:?} on collection {collection:?}")]
    EmptyCandidatePool {
        collection: String,
        mode: PerturbMode,
    },
    #[error("percentile {0} outside 1..=99")]
    BadPercentile(u8),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OwnershipGraph {
    wallets: Vec<Address>,
    collections: Vec<String>,
    /// Per wallet, sorted collection indices.
    wallet_adj: Vec<Vec<CollectionIx>>,
    /// Per collection, sorted wallet indices.
    collection_adj: Vec<Vec<WalletIx>>,
    wallet_index: HashMap<Address, WalletIx>,
    collection_index: HashMap<String, CollectionIx>,
    edge_count: usize,
}

/// Deduplicates holdings into one edge per (wallet, collection) pair.
/// Node ids are assigned in sorted order, so the result is independent of
/// input order and duplicate multiplicity.
pub fn build_ownership_graph(holdings: &[Holding]) -> OwnershipGraph {
    let pairs: BTreeSet<(&Address, &str)> = holdings
        .iter()
        .map(|h| (&h.wallet, h.collection.as_str()))
        .collect();

    let wallet_set: BTreeSet<&Address> = pairs.iter().map(|&(w, _)| w).collect();
    let collection_set: BTreeSet<&str> = pairs.iter().map(|&(_, c)| c).collect();

    let wallets: Vec<Address> = wallet_set.into_iter().cloned().collect();
    let collections: Vec<String> = collection_set.into_iter().map(String::from).collect();

    let wallet_index: HashMap<Address, WalletIx> = wallets
        .iter()
        .enumerate()
        .map(|(i, w)| (w.clone(), i as WalletIx))
        .collect();
    let collection_index: HashMap<String, CollectionIx> = collections
        .iter()
        .enumerate()
        .map(|(i, c)| (c.clone(), i as CollectionIx))
        .collect();

    let mut wallet_adj = vec![Vec::new(); wallets.len()];
    let mut collection_adj = vec![Vec::new(); collections.len()];
    for (w, c) in &pairs {
        let wi = wallet_index[*w];
        let ci = collection_index[*c];
        wallet_adj[wi as usize].push(ci);
        collection_adj[ci as usize].push(wi);
    }
    // BTreeSet iteration is sorted by (wallet, collection), so wallet_adj is
    // already sorted; collection_adj needs its own pass.
    for adj in &mut collection_adj {
        adj.sort_unstable();
    }

    OwnershipGraph {
        edge_count: pairs.len(),
        wallets,
        collections,
        wallet_adj,
        collection_adj,
        wallet_index,
        collection_index,
    }
}

impl OwnershipGraph {
    pub fn wallet_count(&self) -> usize {
        self.wallets.len()
    }

    pub fn collection_count(&self) -> usize {
        self.collections.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edge_count
    }

    pub fn wallets(&self) -> &[Address] {
        &self.wallets
    }

    pub fn collections(&self) -> &[String] {
        &self.collections
    }

    pub fn wallet(&self, w: WalletIx) -> &Address {
        &self.wallets[w as usize]
    }

    pub fn collection(&self, c: CollectionIx) -> &str {
        &self.collections[c as usize]
    }

    pub fn wallet_ix(&self, address: &Address) -> Option<WalletIx> {
        self.wallet_index.get(address).copied()
    }

    pub fn collection_ix(&self, slug: &str) -> Option<CollectionIx> {
        self.collection_index.get(slug).copied()
    }

    pub fn wallet_neighbors(&self, w: WalletIx) -> &[CollectionIx] {
        &self.wallet_adj[w as usize]
    }

    pub fn collection_neighbors(&self, c: CollectionIx) -> &[WalletIx] {
        &self.collection_adj[c as usize]
    }

    pub fn has_edge(&self, w: WalletIx, c: CollectionIx) -> bool {
        self.wallet_adj[w as usize].binary_search(&c).is_ok()
    }

    /// Digest over the full node and edge structure. Overlay tests compare
    /// this before and after experiments to prove the base never mutates.
    pub fn content_hash(&self) -> [u8; 32] {
        let mut hasher = Sha256::new();
        for w in &self.wallets {
            hasher.update(w.as_str().as_bytes());
            hasher.update([0]);
        }
        for c in &self.collections {
            hasher.update(c.as_bytes());
            hasher.update([0]);
        }
        for adj in &self.wallet_adj {
            for &c in adj {
                hasher.update(c.to_le_bytes());
            }
            hasher.update(u32::MAX.to_le_bytes());
        }
        hasher.finalize().into()
    }
}

/// Per-wallet wealth, affinity, and importance, plus the per-collection
/// overlap counts they derive from. Indexed by graph node ids.
#[derive(Debug, Clone, PartialEq)]
pub struct WalletMetrics {
    /// overlap(c) = Σ over other collections of shared-wallet counts.
    pub overlap: Vec<u64>,
    /// wealth(w) = Σ floor prices of the wallet's neighbor collections.
    pub wealth: Vec<Eth>,
    /// affinity(w) = Σ overlap(c) over the wallet's neighbor collections.
    pub affinity: Vec<u64>,
    /// importance = wealth × affinity, exact in wei.
    pub importance: Vec<Eth>,
}

impl WalletMetrics {
    pub fn importance_f64(&self, w: WalletIx) -> f64 {
        self.importance[w as usize].to_f64()
    }
}

/// Computes overlap, wealth, affinity, and importance in O(edges).
///
/// A wallet of degree d contributes d−1 shared-wallet pairs to each of its
/// collections, so overlap(c) = Σ over neighbors w of (deg(w) − 1), which
/// equals the pairwise intersection definition without enumerating pairs.
pub fn compute_wallet_metrics(
    graph: &OwnershipGraph,
    floor_of: impl Fn(&str) -> Option<Eth>,
) -> Result<WalletMetrics, GraphError> {
    let floors: Vec<Eth> = graph
        .collections
        .iter()
        .map(|slug| floor_of(slug).ok_or_else(|| GraphError::MissingFloorPrice(slug.clone())))
        .collect::<Result<_, _>>()?;

    let mut overlap = vec![0u64; graph.collection_count()];
    for (ci, adj) in graph.collection_adj.iter().enumerate() {
        overlap[ci] = adj
            .iter()
            .map(|&w| graph.wallet_adj[w as usize].len() as u64 - 1)
            .sum();
    }

    let mut wealth = Vec::with_capacity(graph.wallet_count());
    let mut affinity = Vec::with_capacity(graph.wallet_count());
    let mut importance = Vec::with_capacity(graph.wallet_count());
    for adj in &graph.wallet_adj {
        let w: Eth = adj.iter().map(|&c| floors[c as usize]).sum();
        let a: u64 = adj.iter().map(|&c| overlap[c as usize]).sum();
        wealth.push(w);
        affinity.push(a);
        importance.push(
            w.checked_mul_int(a as i128)
                .expect("importance overflows wei range"),
        );
    }

    Ok(WalletMetrics {
        overlap,
        wealth,
        affinity,
        importance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn holding(wallet: &str, collection: &str, token: &str) -> Holding {
        Holding {
            wallet: Address::new(wallet),
            collection: collection.to_string(),
            token_id: token.to_string(),
        }
    }

    #[test]
    fn empty_holdings_empty_graph() {
        let g = build_ownership_graph(&[]);
        assert_eq!(g.wallet_count(), 0);
        assert_eq!(g.collection_count(), 0);
        assert_eq!(g.edge_count(), 0);
    }

    #[test]
    fn token_multiplicity_collapses_to_one_edge() {
        let holdings = vec![
            holding("0xW", "c", "1"),
            holding("0xW", "c", "2"),
            holding("0xW", "c", "3"),
        ];
        let g = build_ownership_graph(&holdings);
        assert_eq!(g.edge_count(), 1);
        assert_eq!(g.wallet_count(), 1);
        assert_eq!(g.collection_count(), 1);
    }

    #[test]
    fn two_collection_overlap_fixture() {
        // wallets(A) = {w1, w2}, wallets(B) = {w1}
        let holdings = vec![
            holding("0xW1", "a", "1"),
            holding("0xW2", "a", "2"),
            holding("0xW1", "b", "1"),
        ];
        let g = build_ownership_graph(&holdings);
        let metrics = compute_wallet_metrics(&g, |_| Some(Eth::from_eth(1))).unwrap();

        let a = g.collection_ix("a").unwrap() as usize;
        let b = g.collection_ix("b").unwrap() as usize;
        assert_eq!(metrics.overlap[a], 1);
        assert_eq!(metrics.overlap[b], 1);

        let w1 = g.wallet_ix(&Address::new("0xW1")).unwrap() as usize;
        let w2 = g.wallet_ix(&Address::new("0xW2")).unwrap() as usize;
        assert_eq!(metrics.affinity[w1], 2);
        assert_eq!(metrics.affinity[w2], 1);
        assert_eq!(metrics.wealth[w1], Eth::from_eth(2));
        assert_eq!(metrics.wealth[w2], Eth::from_eth(1));
        assert_eq!(metrics.importance[w1], Eth::from_eth(4));
        assert_eq!(metrics.importance[w2], Eth::from_eth(1));
    }

    #[test]
    fn isolated_wallet_scores_zero() {
        // wallet present in graph only via a degree-1 collection of its own
        let holdings = vec![holding("0xLoner", "solo", "1")];
        let g = build_ownership_graph(&holdings);
        let metrics = compute_wallet_metrics(&g, |_| Some(Eth::ZERO)).unwrap();
        let w = g.wallet_ix(&Address::new("0xLoner")).unwrap() as usize;
        assert_eq!(metrics.wealth[w], Eth::ZERO);
        assert_eq!(metrics.affinity[w], 0);
        assert_eq!(metrics.importance[w], Eth::ZERO);
    }

    #[test]
    fn missing_floor_price_is_an_error() {
        let holdings = vec![holding("0xW", "c", "1")];
        let g = build_ownership_graph(&holdings);
        assert_eq!(
            compute_wallet_metrics(&g, |_| None),
            Err(GraphError::MissingFloorPrice("c".to_string()))
        );
    }

    #[test]
    fn build_is_order_independent() {
        let mut holdings = vec![
            holding("0xB", "y", "1"),
            holding("0xA", "x", "1"),
            holding("0xB", "x", "2"),
            holding("0xA", "x", "9"),
        ];
        let g1 = build_ownership_graph(&holdings);
        holdings.reverse();
        let g2 = build_ownership_graph(&holdings);
        assert_eq!(g1, g2);
        assert_eq!(g1.content_hash(), g2.content_hash());
    }
}
