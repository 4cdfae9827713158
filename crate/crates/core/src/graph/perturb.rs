//! Copy-on-write edge perturbations over the base graph.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{CollectionIx, GraphError, OwnershipGraph, WalletIx, WalletMetrics};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PerturbMode {
    Add,
    Delete,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PerturbWeighting {
    Uniform,
    Wealth,
    Affinity,
    Importance,
}

/// One drawn perturbation: which wallets gain or lose an edge to the target
/// collection, and what the draw looked like.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationSample {
    pub collection: CollectionIx,
    pub mode: PerturbMode,
    pub weighting: PerturbWeighting,
    pub requested_edges: usize,
    pub wallets: Vec<WalletIx>,
    pub seed: u64,
    /// Fewer candidates with positive weight than requested edges.
    pub short_sample: bool,
    /// Every candidate had zero weight; the draw fell back to uniform.
    pub used_uniform_fallback: bool,
}

/// A base graph plus edge changes for a single collection. The base is
/// never touched; views answer adjacency queries with the changes applied.
#[derive(Debug, Clone)]
pub struct GraphOverlay<'g> {
    pub base: &'g OwnershipGraph,
    pub target: CollectionIx,
    added: BTreeSet<WalletIx>,
    removed: BTreeSet<WalletIx>,
}

impl<'g> GraphOverlay<'g> {
    pub fn identity(base: &'g OwnershipGraph, target: CollectionIx) -> GraphOverlay<'g> {
        GraphOverlay {
            base,
            target,
            added: BTreeSet::new(),
            removed: BTreeSet::new(),
        }
    }

    pub fn from_sample(base: &'g OwnershipGraph, sample: &PerturbationSample) -> GraphOverlay<'g> {
        let mut overlay = GraphOverlay::identity(base, sample.collection);
        match sample.mode {
            PerturbMode::Add => overlay.added = sample.wallets.iter().copied().collect(),
            PerturbMode::Delete => overlay.removed = sample.wallets.iter().copied().collect(),
        }
        overlay
    }

    pub fn is_identity(&self) -> bool {
        self.added.is_empty() && self.removed.is_empty()
    }

    pub fn has_edge(&self, w: WalletIx, c: CollectionIx) -> bool {
        if c == self.target {
            if self.added.contains(&w) {
                return true;
            }
            if self.removed.contains(&w) {
                return false;
            }
        }
        self.base.has_edge(w, c)
    }

    pub fn wallet_degree(&self, w: WalletIx) -> usize {
        let base = self.base.wallet_neighbors(w).len();
        if self.added.contains(&w) {
            base + 1
        } else if self.removed.contains(&w) {
            base - 1
        } else {
            base
        }
    }

    pub fn collection_degree(&self, c: CollectionIx) -> usize {
        let base = self.base.collection_neighbors(c).len();
        if c == self.target {
            base + self.added.len() - self.removed.len()
        } else {
            base
        }
    }

    pub fn collection_neighbors(&self, c: CollectionIx) -> Vec<WalletIx> {
        let base = self.base.collection_neighbors(c);
        if c != self.target {
            return base.to_vec();
        }
        let mut out: Vec<WalletIx> = base
            .iter()
            .copied()
            .filter(|w| !self.removed.contains(w))
            .collect();
        out.extend(self.added.iter().copied());
        out.sort_unstable();
        out
    }

    pub fn wallet_neighbors(&self, w: WalletIx) -> Vec<CollectionIx> {
        let mut out = self.base.wallet_neighbors(w).to_vec();
        if self.added.contains(&w) {
            let pos = out.binary_search(&self.target).unwrap_err();
            out.insert(pos, self.target);
        } else if self.removed.contains(&w) {
            if let Ok(pos) = out.binary_search(&self.target) {
                out.remove(pos);
            }
        }
        out
    }
}

/// Draws `edge_count` wallets without replacement, with probability
/// proportional to the chosen metric, and returns the non-destructive
/// overlay realizing the change.
///
/// Zero-weight wallets cannot be drawn under a metric weighting; if none of
/// the candidates has positive weight the draw falls back to uniform and
/// says so, and if fewer candidates are drawable than requested the sample
/// is short and flagged.
pub fn perturb_edges<'g>(
    graph: &'g OwnershipGraph,
    collection: CollectionIx,
    edge_count: usize,
    mode: PerturbMode,
    weighting: PerturbWeighting,
    metrics: &WalletMetrics,
    seed: u64,
) -> Result<(PerturbationSample, GraphOverlay<'g>), GraphError> {
    let neighbors: BTreeSet<WalletIx> =
        graph.collection_neighbors(collection).iter().copied().collect();
    let candidates: Vec<WalletIx> = match mode {
        PerturbMode::Delete => neighbors.iter().copied().collect(),
        PerturbMode::Add => (0..graph.wallet_count() as WalletIx)
            .filter(|w| !neighbors.contains(w))
            .collect(),
    };
    if candidates.is_empty() {
        return Err(GraphError::EmptyCandidatePool {
            collection: graph.collection(collection).to_string(),
            mode,
        });
    }

    let weight_of = |w: WalletIx| -> f64 {
        match weighting {
            PerturbWeighting::Uniform => 1.0,
            PerturbWeighting::Wealth => metrics.wealth[w as usize].to_f64().max(0.0),
            PerturbWeighting::Affinity => metrics.affinity[w as usize] as f64,
            PerturbWeighting::Importance => metrics.importance_f64(w).max(0.0),
        }
    };

    let mut weights: Vec<f64> = candidates.iter().map(|&w| weight_of(w)).collect();
    let used_uniform_fallback = weights.iter().all(|&x| x == 0.0);
    if used_uniform_fallback {
        weights.fill(1.0);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let wallets = weighted_sample_without_replacement(&candidates, &weights, edge_count, &mut rng);
    let short_sample = wallets.len() < edge_count;

    let sample = PerturbationSample {
        collection,
        mode,
        weighting,
        requested_edges: edge_count,
        wallets,
        seed,
        short_sample,
        used_uniform_fallback,
    };
    let overlay = GraphOverlay::from_sample(graph, &sample);
    Ok((sample, overlay))
}

/// Weighted sampling without replacement: each item gets key ln(u)/w and the
/// k largest keys win, which selects items with probability proportional to
/// weight at each draw. Zero-weight items never win.
fn weighted_sample_without_replacement(
    items: &[WalletIx],
    weights: &[f64],
    k: usize,
    rng: &mut impl Rng,
) -> Vec<WalletIx> {
    let mut keyed: Vec<(f64, WalletIx)> = items
        .iter()
        .zip(weights)
        .filter_map(|(&item, &w)| {
            // Draw for every item, even filtered ones, so the consumed
            // randomness depends only on the candidate list, not weights.
            let u: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
            (w > 0.0).then(|| (u.ln() / w, item))
        })
        .collect();
    keyed.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
    keyed.truncate(k);
    let mut out: Vec<WalletIx> = keyed.into_iter().map(|(_, item)| item).collect();
    out.sort_unstable();
    out
}

/// Removes the target collection's edges to neighbor wallets whose wealth
/// falls strictly below the p-th percentile of that neighborhood's wealth.
/// Equal-wealth neighborhoods therefore lose nothing.
pub fn remove_bottom_percentile<'g>(
    graph: &'g OwnershipGraph,
    collection: CollectionIx,
    percentile: u8,
    metrics: &WalletMetrics,
) -> Result<GraphOverlay<'g>, GraphError> {
    if percentile == 0 || percentile > 99 {
        return Err(GraphError::BadPercentile(percentile));
    }
    let neighbors = graph.collection_neighbors(collection);
    if neighbors.is_empty() {
        return Err(GraphError::NoNeighbors(
            graph.collection(collection).to_string(),
        ));
    }

    let mut wealths: Vec<crate::money::Eth> = neighbors
        .iter()
        .map(|&w| metrics.wealth[w as usize])
        .collect();
    wealths.sort_unstable();
    let cut_index = (percentile as usize * wealths.len()) / 100;
    let threshold = wealths[cut_index];

    let mut overlay = GraphOverlay::identity(graph, collection);
    overlay.removed = neighbors
        .iter()
        .copied()
        .filter(|&w| metrics.wealth[w as usize] < threshold)
        .collect();
    Ok(overlay)
}
