//! Splitting the ownership graph into overlapping training subgraphs.

use std::collections::BTreeSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::derive_seed;

use super::{CollectionIx, OwnershipGraph, WalletIx};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SplitOptions {
    /// Wallets sampled to seed each subgraph.
    pub wallet_seed_count: usize,
    /// Cap on collections per subgraph; overflow is truncated uniformly.
    pub collection_cap: usize,
    /// Number of subgraphs.
    pub count: usize,
    pub seed: u64,
}

impl Default for SplitOptions {
    fn default() -> SplitOptions {
        SplitOptions {
            wallet_seed_count: 75,
            collection_cap: 1500,
            count: 50,
            seed: 0,
        }
    }
}

/// Node sets of one induced bipartite subgraph, as sorted base-graph ids.
/// Edges are always answered by the base graph (or an overlay over it), so
/// a subgraph is just a membership filter.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Subgraph {
    pub wallets: Vec<WalletIx>,
    pub collections: Vec<CollectionIx>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubgraphSplit {
    pub subgraphs: Vec<Subgraph>,
    /// For each collection id, which subgraphs contain it.
    pub membership: Vec<Vec<usize>>,
}

/// Samples `count` subgraphs: seed wallets drawn uniformly, their neighbor
/// collections taken (truncated uniformly at the cap), then every wallet
/// adjacent to a kept collection joins. Deterministic in the seed.
pub fn split_subgraphs(graph: &OwnershipGraph, options: &SplitOptions) -> SubgraphSplit {
    let mut subgraphs = Vec::with_capacity(options.count);
    for i in 0..options.count {
        let sub_seed = derive_seed(options.seed, i as u64);
        subgraphs.push(sample_subgraph(graph, options, sub_seed));
    }

    let mut membership = vec![Vec::new(); graph.collection_count()];
    for (idx, sub) in subgraphs.iter().enumerate() {
        for &c in &sub.collections {
            membership[c as usize].push(idx);
        }
    }
    SubgraphSplit {
        subgraphs,
        membership,
    }
}

fn sample_subgraph(graph: &OwnershipGraph, options: &SplitOptions, seed: u64) -> Subgraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let wallet_total = graph.wallet_count();
    let seed_count = options.wallet_seed_count.min(wallet_total);
    let seeds = rand::seq::index::sample(&mut rng, wallet_total, seed_count);

    let mut collections: BTreeSet<CollectionIx> = BTreeSet::new();
    for w in seeds.iter() {
        collections.extend(graph.wallet_neighbors(w as WalletIx).iter().copied());
    }
    let mut collections: Vec<CollectionIx> = collections.into_iter().collect();
    if collections.len() > options.collection_cap {
        let keep = rand::seq::index::sample(&mut rng, collections.len(), options.collection_cap);
        let mut kept: Vec<CollectionIx> = keep.iter().map(|i| collections[i]).collect();
        kept.sort_unstable();
        collections = kept;
    }

    let mut wallets: BTreeSet<WalletIx> = BTreeSet::new();
    for &c in &collections {
        wallets.extend(graph.collection_neighbors(c).iter().copied());
    }

    Subgraph {
        wallets: wallets.into_iter().collect(),
        collections,
    }
}
