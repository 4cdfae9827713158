//! From-scratch graph convolutional model for floor-price percentiles:
//! forward and reverse passes, seeded initialization, training with
//! validation selection, checkpoints, gradient checking, and the edge
//! perturbation experiment.

pub mod bucket;
pub mod checkpoint;
pub mod experiment;
pub mod gradcheck;
pub mod prepare;
pub mod train;

use ndarray::{Array1, Array2};
use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::graph::GraphError;

pub use bucket::{bucketize_floor_prices, median_baseline, PercentileTargets};
pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use experiment::{
    bootstrap_mean_interval, predicted_delta_experiment, DeltaSummary, PerturbPlan,
};
pub use gradcheck::{gradient_check, GradCheckReport};
pub use prepare::{
    feature_matrix, full_graph_adjacency, normalized_adjacency, overlay_adjacency,
    subgraph_adjacency, FeatureSpec, NodeSpace, SparseAdj,
};
pub use train::{
    prepare_samples, rmse_on, split_collections, train, SplitAssignment, TrainConfig, TrainLog,
    TrainSample,
};

/// Hidden and output widths of the four convolution layers.
pub const LAYER_DIMS: [usize; 4] = [64, 32, 16, 1];

#[derive(Debug, Error)]
pub enum GcnError {
    #[error("empty input")]
    EmptyInput,
    #[error("node {node} out of range for {nodes} nodes")]
    NodeOutOfRange { node: usize, nodes: usize },
    #[error("unsupported feature dimension {0}; expected 1 or 384")]
    UnsupportedFeatureDim(usize),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("collection {0} has no centroid")]
    MissingCentroid(String),
    #[error("non-finite activation in layer {layer}")]
    NonFiniteForward { layer: usize },
    #[error("training diverged at epoch {epoch}: loss is not finite")]
    Diverged { epoch: usize },
    #[error("bad training config: {0}")]
    BadConfig(String),
    #[error("malformed checkpoint: {0}")]
    MalformedCheckpoint(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One convolution layer: out = act(Â · input · w + b).
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

/// The four-layer model plus the target scaling it was trained with.
/// Predictions leave on the 0..=99 bucket scale; internally the network
/// works on standardized targets so one learning rate fits all markets.
#[derive(Debug, Clone, PartialEq)]
pub struct GcnModel {
    pub layers: Vec<Layer>,
    pub f_in: usize,
    pub output_mean: f64,
    pub output_scale: f64,
    pub config: train::TrainConfig,
    pub best_epoch: usize,
}

/// Seeded fan-based uniform initialization; biases start at zero.
pub fn init_model(f_in: usize, seed: u64) -> Result<GcnModel, GcnError> {
    if f_in != 1 && f_in != crate::model::EMBEDDING_DIM {
        return Err(GcnError::UnsupportedFeatureDim(f_in));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut layers = Vec::with_capacity(LAYER_DIMS.len());
    let mut fan_in = f_in;
    for &fan_out in &LAYER_DIMS {
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let dist = Uniform::new_inclusive(-limit, limit);
        let w = Array2::from_shape_fn((fan_in, fan_out), |_| dist.sample(&mut rng));
        layers.push(Layer {
            w,
            b: Array1::zeros(fan_out),
        });
        fan_in = fan_out;
    }
    Ok(GcnModel {
        layers,
        f_in,
        output_mean: 0.0,
        output_scale: 1.0,
        config: train::TrainConfig::default(),
        best_epoch: 0,
    })
}

/// Everything the reverse pass and the gradient check need from a forward
/// pass: per layer, the propagated input P = Â · H_prev and the
/// pre-activation Z = P · w + b.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub p: Vec<Array2<f64>>,
    pub z: Vec<Array2<f64>>,
}

impl ForwardCache {
    /// Standardized outputs, one per node.
    pub fn outputs(&self) -> Array1<f64> {
        self.z.last().expect("cache has layers").column(0).to_owned()
    }
}

fn relu(z: &Array2<f64>) -> Array2<f64> {
    z.mapv(|v| v.max(0.0))
}

/// Runs all layers: hidden activations are rectified, the last layer is
/// linear. Outputs stay on the standardized scale.
pub fn forward_cached(
    adj: &SparseAdj,
    features: &Array2<f64>,
    model: &GcnModel,
) -> Result<ForwardCache, GcnError> {
    if features.ncols() != model.f_in {
        return Err(GcnError::DimensionMismatch {
            expected: model.f_in,
            found: features.ncols(),
        });
    }
    if features.nrows() != adj.n() {
        return Err(GcnError::DimensionMismatch {
            expected: adj.n(),
            found: features.nrows(),
        });
    }
    let last = model.layers.len() - 1;
    let mut h = features.clone();
    let mut cache = ForwardCache {
        p: Vec::with_capacity(model.layers.len()),
        z: Vec::with_capacity(model.layers.len()),
    };
    for (l, layer) in model.layers.iter().enumerate() {
        let p = adj.matmul(&h);
        let z = p.dot(&layer.w) + &layer.b;
        if !z.iter().all(|v| v.is_finite()) {
            return Err(GcnError::NonFiniteForward { layer: l });
        }
        h = if l < last { relu(&z) } else { z.clone() };
        cache.p.push(p);
        cache.z.push(z);
    }
    Ok(cache)
}

/// Bucket-scale predictions for every node.
pub fn predict(
    adj: &SparseAdj,
    features: &Array2<f64>,
    model: &GcnModel,
) -> Result<Array1<f64>, GcnError> {
    let cache = forward_cached(adj, features, model)?;
    Ok(cache.outputs() * model.output_scale + model.output_mean)
}

/// Per-layer parameter gradients, shaped like the model.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub dw: Vec<Array2<f64>>,
    pub db: Vec<Array1<f64>>,
}

impl Gradients {
    pub fn zeros_like(model: &GcnModel) -> Gradients {
        Gradients {
            dw: model.layers.iter().map(|l| Array2::zeros(l.w.dim())).collect(),
            db: model.layers.iter().map(|l| Array1::zeros(l.b.len())).collect(),
        }
    }

    pub fn add(&mut self, other: &Gradients) {
        for (a, b) in self.dw.iter_mut().zip(&other.dw) {
            *a += b;
        }
        for (a, b) in self.db.iter_mut().zip(&other.db) {
            *a += b;
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for a in &mut self.dw {
            *a *= factor;
        }
        for a in &mut self.db {
            *a *= factor;
        }
    }
}

/// Mean-squared-error loss over the labeled rows (standardized targets) and
/// its gradient through every layer.
///
/// With Z = Â H w + b and Â symmetric, dW = (Â H)ᵀ dZ, db = colsum dZ, and
/// the signal entering the previous layer is Â (dZ wᵀ) gated by the
/// rectifier mask.
pub fn backward(
    adj: &SparseAdj,
    model: &GcnModel,
    cache: &ForwardCache,
    labeled: &[(usize, f64)],
) -> Result<(f64, Gradients), GcnError> {
    if labeled.is_empty() {
        return Err(GcnError::EmptyInput);
    }
    let n = adj.n();
    for &(row, _) in labeled {
        if row >= n {
            return Err(GcnError::NodeOutOfRange { node: row, nodes: n });
        }
    }

    let last = model.layers.len() - 1;
    let outputs = cache.outputs();
    let m = labeled.len() as f64;
    let mut loss = 0.0;
    let mut dz = Array2::zeros((n, 1));
    for &(row, target) in labeled {
        let r = outputs[row] - target;
        loss += r * r / m;
        dz[[row, 0]] += 2.0 * r / m;
    }

    let mut grads = Gradients::zeros_like(model);
    for l in (0..=last).rev() {
        grads.dw[l] = cache.p[l].t().dot(&dz);
        grads.db[l] = dz.sum_axis(ndarray::Axis(0));
        if l > 0 {
            let dh = adj.matmul(&dz.dot(&model.layers[l].w.t()));
            let mask = cache.z[l - 1].mapv(|v| if v > 0.0 { 1.0 } else { 0.0 });
            dz = dh * mask;
        }
    }
    Ok((loss, grads))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn tiny_model(weights: &[f64; 4]) -> GcnModel {
        // 1-dim chains: each layer routes through its first unit only
        let mut model = init_model(1, 0).unwrap();
        let mut fan_in = 1;
        for (l, &scale) in weights.iter().enumerate() {
            let fan_out = LAYER_DIMS[l];
            let mut w = Array2::zeros((fan_in, fan_out));
            w[[0, 0]] = scale;
            model.layers[l].w = w;
            model.layers[l].b = Array1::zeros(fan_out);
            fan_in = fan_out;
        }
        model
    }

    #[test]
    fn isolated_node_composes_the_linear_maps() {
        // single node: Â = [[1]], so the network is w3(w2(w1(w0 x)))
        let model = tiny_model(&[2.0, 3.0, 0.5, 4.0]);
        let adj = normalized_adjacency(1, []).unwrap();
        let features = Array2::from_elem((1, 1), 1.5);
        let cache = forward_cached(&adj, &features, &model).unwrap();
        assert_abs_diff_eq!(cache.outputs()[0], 1.5 * 2.0 * 3.0 * 0.5 * 4.0, epsilon = 1e-12);
    }

    #[test]
    fn negative_path_is_cut_by_the_rectifier() {
        let model = tiny_model(&[-2.0, 3.0, 0.5, 4.0]);
        let adj = normalized_adjacency(1, []).unwrap();
        let features = Array2::from_elem((1, 1), 1.0);
        let cache = forward_cached(&adj, &features, &model).unwrap();
        assert_eq!(cache.outputs()[0], 0.0);
    }

    #[test]
    fn three_node_path_matches_hand_chain() {
        let model = tiny_model(&[1.0, 1.0, 1.0, 1.0]);
        let adj = normalized_adjacency(3, [(0, 1), (1, 2)]).unwrap();
        let x = Array2::from_shape_vec((3, 1), vec![1.0, 2.0, 3.0]).unwrap();
        let cache = forward_cached(&adj, &x, &model).unwrap();
        // all weights route the scalar untouched and inputs are positive,
        // so the output is Â applied four times to x
        let a = adj.to_dense();
        let expect = a.dot(&a).dot(&a).dot(&a).dot(&x);
        for i in 0..3 {
            assert_abs_diff_eq!(cache.outputs()[i], expect[[i, 0]], epsilon = 1e-9);
        }
    }

    #[test]
    fn prediction_applies_target_scaling() {
        let mut model = tiny_model(&[1.0, 1.0, 1.0, 1.0]);
        model.output_mean = 50.0;
        model.output_scale = 10.0;
        let adj = normalized_adjacency(1, []).unwrap();
        let features = Array2::from_elem((1, 1), 2.0);
        let preds = predict(&adj, &features, &model).unwrap();
        assert_abs_diff_eq!(preds[0], 2.0 * 10.0 + 50.0, epsilon = 1e-12);
    }

    #[test]
    fn forward_is_permutation_equivariant() {
        let model = init_model(1, 9).unwrap();
        let adj = normalized_adjacency(5, [(0, 1), (1, 2), (2, 3), (3, 4), (4, 0), (1, 3)])
            .unwrap();
        let x = Array2::from_shape_vec((5, 1), vec![0.3, -1.0, 2.0, 0.7, 1.1]).unwrap();
        let base = forward_cached(&adj, &x, &model).unwrap().outputs();

        // relabel nodes by the cycle i → (i + 2) mod 5
        let perm = |i: u32| (i + 2) % 5;
        let edges = [(0, 1), (1, 2), (2, 3), (3, 4), (4, 0), (1, 3)]
            .map(|(a, b)| (perm(a), perm(b)));
        let padj = normalized_adjacency(5, edges).unwrap();
        let mut px = Array2::zeros((5, 1));
        for i in 0..5u32 {
            px[[perm(i) as usize, 0]] = x[[i as usize, 0]];
        }
        let permuted = forward_cached(&padj, &px, &model).unwrap().outputs();
        for i in 0..5u32 {
            assert_abs_diff_eq!(base[i as usize], permuted[perm(i) as usize], epsilon = 1e-12);
        }
    }

    #[test]
    fn unsupported_feature_dim_is_rejected() {
        assert!(matches!(init_model(2, 0), Err(GcnError::UnsupportedFeatureDim(2))));
        assert!(init_model(384, 0).is_ok());
    }

    #[test]
    fn mismatched_features_are_rejected() {
        let model = init_model(1, 0).unwrap();
        let adj = normalized_adjacency(2, [(0, 1)]).unwrap();
        let bad = Array2::zeros((2, 3));
        assert!(matches!(
            forward_cached(&adj, &bad, &model),
            Err(GcnError::DimensionMismatch { .. })
        ));
        let short = Array2::zeros((1, 1));
        assert!(matches!(
            forward_cached(&adj, &short, &model),
            Err(GcnError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn deterministic_init_and_forward() {
        let a = init_model(1, 4).unwrap();
        let b = init_model(1, 4).unwrap();
        assert_eq!(a, b);
        let c = init_model(1, 5).unwrap();
        assert_ne!(a.layers[0].w, c.layers[0].w);
    }
}
