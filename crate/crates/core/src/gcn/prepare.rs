//! Normalized adjacency construction and node feature assembly.
//!
//! Node order in every matrix is wallets first, then collections, each in
//! the id order of the underlying node list. All propagation uses
//! Â = D^(−1/2) (A + I) D^(−1/2), which is symmetric, so the same matrix
//! serves forward and reverse passes.

use std::collections::BTreeMap;

use ndarray::{Array1, Array2};

use crate::graph::{GraphOverlay, OwnershipGraph, Subgraph};
use crate::model::EMBEDDING_DIM;

use super::GcnError;

/// Symmetric sparse matrix in compressed-row form.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseAdj {
    n: usize,
    row_ptr: Vec<usize>,
    col_ix: Vec<u32>,
    val: Vec<f64>,
}

impl SparseAdj {
    pub fn n(&self) -> usize {
        self.n
    }

    /// Â · dense, the propagation step.
    pub fn matmul(&self, dense: &Array2<f64>) -> Array2<f64> {
        let cols = dense.ncols();
        let mut out = Array2::zeros((self.n, cols));
        for row in 0..self.n {
            let mut acc = Array1::<f64>::zeros(cols);
            for k in self.row_ptr[row]..self.row_ptr[row + 1] {
                let j = self.col_ix[k] as usize;
                let v = self.val[k];
                acc.scaled_add(v, &dense.row(j));
            }
            out.row_mut(row).assign(&acc);
        }
        out
    }

    /// Â · v for a single column.
    pub fn matvec(&self, v: &Array1<f64>) -> Array1<f64> {
        let mut out = Array1::zeros(self.n);
        for row in 0..self.n {
            let mut acc = 0.0;
            for k in self.row_ptr[row]..self.row_ptr[row + 1] {
                acc += self.val[k] * v[self.col_ix[k] as usize];
            }
            out[row] = acc;
        }
        out
    }

    /// Dense copy, for small fixtures and hand checks.
    pub fn to_dense(&self) -> Array2<f64> {
        let mut out = Array2::zeros((self.n, self.n));
        for row in 0..self.n {
            for k in self.row_ptr[row]..self.row_ptr[row + 1] {
                out[[row, self.col_ix[k] as usize]] = self.val[k];
            }
        }
        out
    }
}

/// Builds Â from undirected edges over `n` nodes. Self-loops are implied;
/// any supplied (i, i) pairs are ignored, and duplicate edges collapse.
pub fn normalized_adjacency(
    n: usize,
    edges: impl IntoIterator<Item = (u32, u32)>,
) -> Result<SparseAdj, GcnError> {
    if n == 0 {
        return Err(GcnError::EmptyInput);
    }
    let mut neighbors: Vec<Vec<u32>> = vec![Vec::new(); n];
    for (a, b) in edges {
        let (a, b) = (a as usize, b as usize);
        if a >= n || b >= n {
            return Err(GcnError::NodeOutOfRange {
                node: a.max(b),
                nodes: n,
            });
        }
        if a != b {
            neighbors[a].push(b as u32);
            neighbors[b].push(a as u32);
        }
    }
    for (i, adj) in neighbors.iter_mut().enumerate() {
        adj.push(i as u32);
        adj.sort_unstable();
        adj.dedup();
    }

    let degree: Vec<f64> = neighbors.iter().map(|adj| adj.len() as f64).collect();
    let inv_sqrt: Vec<f64> = degree.iter().map(|d| 1.0 / d.sqrt()).collect();

    let mut row_ptr = Vec::with_capacity(n + 1);
    let mut col_ix = Vec::new();
    let mut val = Vec::new();
    row_ptr.push(0);
    for (i, adj) in neighbors.iter().enumerate() {
        for &j in adj {
            col_ix.push(j);
            val.push(inv_sqrt[i] * inv_sqrt[j as usize]);
        }
        row_ptr.push(col_ix.len());
    }
    Ok(SparseAdj {
        n,
        row_ptr,
        col_ix,
        val,
    })
}

/// The node space of one subgraph: wallets first, then collections, with
/// lookup from graph ids to row indices.
#[derive(Debug, Clone)]
pub struct NodeSpace {
    pub n_wallets: usize,
    pub n_collections: usize,
    wallet_row: BTreeMap<u32, usize>,
    collection_row: BTreeMap<u32, usize>,
    collection_ids: Vec<u32>,
}

impl NodeSpace {
    pub fn n(&self) -> usize {
        self.n_wallets + self.n_collections
    }

    pub fn wallet_row(&self, w: u32) -> Option<usize> {
        self.wallet_row.get(&w).copied()
    }

    pub fn collection_row(&self, c: u32) -> Option<usize> {
        self.collection_row.get(&c).copied()
    }

    /// Collection graph ids in row order.
    pub fn collection_ids(&self) -> &[u32] {
        &self.collection_ids
    }
}

fn node_space(wallets: &[u32], collections: &[u32]) -> NodeSpace {
    let wallet_row = wallets.iter().enumerate().map(|(i, &w)| (w, i)).collect();
    let collection_row = collections
        .iter()
        .enumerate()
        .map(|(i, &c)| (c, wallets.len() + i))
        .collect();
    NodeSpace {
        n_wallets: wallets.len(),
        n_collections: collections.len(),
        wallet_row,
        collection_row,
        collection_ids: collections.to_vec(),
    }
}

/// Â and node space for one sampled subgraph, edges read from the base graph.
pub fn subgraph_adjacency(
    graph: &OwnershipGraph,
    subgraph: &Subgraph,
) -> Result<(SparseAdj, NodeSpace), GcnError> {
    let space = node_space(&subgraph.wallets, &subgraph.collections);
    let mut edges = Vec::new();
    for (wi, &w) in subgraph.wallets.iter().enumerate() {
        for &c in graph.wallet_neighbors(w) {
            if let Some(cr) = space.collection_row(c) {
                edges.push((wi as u32, cr as u32));
            }
        }
    }
    let adj = normalized_adjacency(space.n(), edges)?;
    Ok((adj, space))
}

/// Â and node space for the whole graph.
pub fn full_graph_adjacency(graph: &OwnershipGraph) -> Result<(SparseAdj, NodeSpace), GcnError> {
    let wallets: Vec<u32> = (0..graph.wallet_count() as u32).collect();
    let collections: Vec<u32> = (0..graph.collection_count() as u32).collect();
    let space = node_space(&wallets, &collections);
    let mut edges = Vec::new();
    for w in 0..graph.wallet_count() as u32 {
        for &c in graph.wallet_neighbors(w) {
            edges.push((w, space.collection_row(c).unwrap() as u32));
        }
    }
    let adj = normalized_adjacency(space.n(), edges)?;
    Ok((adj, space))
}

/// Â for the whole graph with an overlay's edge changes applied. The node
/// space is identical to the base graph's, so predictions are comparable
/// row by row.
pub fn overlay_adjacency(overlay: &GraphOverlay) -> Result<(SparseAdj, NodeSpace), GcnError> {
    let graph = overlay.base;
    let wallets: Vec<u32> = (0..graph.wallet_count() as u32).collect();
    let collections: Vec<u32> = (0..graph.collection_count() as u32).collect();
    let space = node_space(&wallets, &collections);
    let mut edges = Vec::new();
    for w in 0..graph.wallet_count() as u32 {
        for c in overlay.wallet_neighbors(w) {
            edges.push((w, space.collection_row(c).unwrap() as u32));
        }
    }
    let adj = normalized_adjacency(space.n(), edges)?;
    Ok((adj, space))
}

/// What goes into each node's feature row.
#[derive(Debug, Clone, PartialEq)]
pub enum FeatureSpec {
    /// Every node gets the scalar 1.
    Scalar,
    /// Collections get their centroid; wallets get the zero vector.
    Centroids(BTreeMap<String, Vec<f64>>),
}

impl FeatureSpec {
    pub fn dim(&self) -> usize {
        match self {
            FeatureSpec::Scalar => 1,
            FeatureSpec::Centroids(_) => EMBEDDING_DIM,
        }
    }
}

/// Feature matrix for a node space, rows aligned with the adjacency.
pub fn feature_matrix(
    graph: &OwnershipGraph,
    space: &NodeSpace,
    spec: &FeatureSpec,
) -> Result<Array2<f64>, GcnError> {
    let dim = spec.dim();
    let mut out = Array2::zeros((space.n(), dim));
    match spec {
        FeatureSpec::Scalar => out.fill(1.0),
        FeatureSpec::Centroids(centroids) => {
            for (i, &c) in space.collection_ids().iter().enumerate() {
                let slug = graph.collection(c);
                let centroid = centroids
                    .get(slug)
                    .ok_or_else(|| GcnError::MissingCentroid(slug.to_string()))?;
                if centroid.len() != dim {
                    return Err(GcnError::DimensionMismatch {
                        expected: dim,
                        found: centroid.len(),
                    });
                }
                out.row_mut(space.n_wallets + i)
                    .assign(&Array1::from_vec(centroid.clone()));
            }
        }
    }
    Ok(out)
}
