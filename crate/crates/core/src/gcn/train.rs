//! Mini-batch training over subgraph samples with adaptive moment updates
//! and best-validation checkpoint selection.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::derive_seed;
use crate::gcn::bucket::PercentileTargets;
use crate::gcn::prepare::{feature_matrix, subgraph_adjacency, FeatureSpec, SparseAdj};
use crate::graph::{OwnershipGraph, SubgraphSplit};

use super::{backward, forward_cached, init_model, GcnError, GcnModel, Gradients, Layer};

const SALT_INIT: u64 = 0x01;
const SALT_SPLIT: u64 = 0x02;
const SALT_ORDER: u64 = 0x03;

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub train_fraction: f64,
    pub val_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> TrainConfig {
        TrainConfig {
            epochs: 2_500,
            batch_size: 4,
            learning_rate: 1e-3,
            seed: 0,
            train_fraction: 0.70,
            val_fraction: 0.15,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<(), GcnError> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(GcnError::BadConfig(
                "epochs and batch_size must be positive".to_string(),
            ));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(GcnError::BadConfig(
                "learning_rate must be positive and finite".to_string(),
            ));
        }
        let (t, v) = (self.train_fraction, self.val_fraction);
        if !(t > 0.0 && v >= 0.0 && t + v <= 1.0) {
            return Err(GcnError::BadConfig(format!(
                "split fractions train={t} val={v} must satisfy 0 < train, 0 <= val, train + val <= 1"
            )));
        }
        Ok(())
    }
}

/// Disjoint collection splits; whatever the fractions leave over is test.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitAssignment {
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
}

/// Seeded shuffle, then contiguous cuts at the configured fractions. Every
/// collection lands in exactly one part and train is never empty.
pub fn split_collections(
    slugs: &[String],
    config: &TrainConfig,
) -> Result<SplitAssignment, GcnError> {
    config.validate()?;
    if slugs.is_empty() {
        return Err(GcnError::EmptyInput);
    }
    let mut order: Vec<String> = slugs.to_vec();
    order.sort_unstable();
    order.dedup();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, SALT_SPLIT));
    order.shuffle(&mut rng);

    let n = order.len();
    let n_train = ((n as f64 * config.train_fraction).floor() as usize).max(1);
    let n_val = ((n as f64 * config.val_fraction).floor() as usize).min(n - n_train);
    let val_end = n_train + n_val;
    Ok(SplitAssignment {
        train: order[..n_train].to_vec(),
        val: order[n_train..val_end].to_vec(),
        test: order[val_end..].to_vec(),
    })
}

/// One subgraph ready for the optimizer: adjacency, features, and labeled
/// collection rows per split, targets on the bucket scale.
#[derive(Debug, Clone)]
pub struct TrainSample {
    pub adj: SparseAdj,
    pub features: Array2<f64>,
    pub train_nodes: Vec<(usize, f64)>,
    pub val_nodes: Vec<(usize, f64)>,
    pub test_nodes: Vec<(usize, f64)>,
}

/// Maps each sampled subgraph into a [`TrainSample`]. Collections without a
/// bucket target stay unlabeled, and wallet nodes are never labeled.
pub fn prepare_samples(
    graph: &OwnershipGraph,
    split: &SubgraphSplit,
    targets: &PercentileTargets,
    assignment: &SplitAssignment,
    spec: &FeatureSpec,
) -> Result<Vec<TrainSample>, GcnError> {
    enum Role {
        Train,
        Val,
        Test,
    }
    let mut role_of = std::collections::BTreeMap::new();
    for s in &assignment.train {
        role_of.insert(s.as_str(), Role::Train);
    }
    for s in &assignment.val {
        role_of.insert(s.as_str(), Role::Val);
    }
    for s in &assignment.test {
        role_of.insert(s.as_str(), Role::Test);
    }

    let mut samples = Vec::with_capacity(split.subgraphs.len());
    for subgraph in &split.subgraphs {
        let (adj, space) = subgraph_adjacency(graph, subgraph)?;
        let features = feature_matrix(graph, &space, spec)?;
        let mut sample = TrainSample {
            adj,
            features,
            train_nodes: Vec::new(),
            val_nodes: Vec::new(),
            test_nodes: Vec::new(),
        };
        for (i, &c) in space.collection_ids().iter().enumerate() {
            let slug = graph.collection(c);
            let Some(&bucket) = targets.bucket.get(slug) else {
                continue;
            };
            let node = (space.n_wallets + i, bucket as f64);
            match role_of.get(slug) {
                Some(Role::Train) => sample.train_nodes.push(node),
                Some(Role::Val) => sample.val_nodes.push(node),
                Some(Role::Test) => sample.test_nodes.push(node),
                None => {}
            }
        }
        samples.push(sample);
    }
    Ok(samples)
}

/// Per-epoch record of the run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainLog {
    /// Mean training loss per epoch, on the standardized scale.
    pub epoch_train_mse: Vec<f64>,
    /// Validation RMSE per epoch, on the bucket scale.
    pub epoch_val_rmse: Vec<f64>,
    pub best_epoch: usize,
    pub best_val_rmse: f64,
}

struct Adam {
    m: Gradients,
    v: Gradients,
    t: i32,
}

impl Adam {
    fn new(model: &GcnModel) -> Adam {
        Adam {
            m: Gradients::zeros_like(model),
            v: Gradients::zeros_like(model),
            t: 0,
        }
    }

    fn step(&mut self, layers: &mut [Layer], grads: &Gradients, lr: f64) {
        self.t += 1;
        let bc1 = 1.0 - BETA1.powi(self.t);
        let bc2 = 1.0 - BETA2.powi(self.t);
        for (l, layer) in layers.iter_mut().enumerate() {
            ndarray::Zip::from(&mut layer.w)
                .and(&grads.dw[l])
                .and(&mut self.m.dw[l])
                .and(&mut self.v.dw[l])
                .for_each(|p, &g, m, v| {
                    *m = BETA1 * *m + (1.0 - BETA1) * g;
                    *v = BETA2 * *v + (1.0 - BETA2) * g * g;
                    *p -= lr * (*m / bc1) / ((*v / bc2).sqrt() + ADAM_EPS);
                });
            ndarray::Zip::from(&mut layer.b)
                .and(&grads.db[l])
                .and(&mut self.m.db[l])
                .and(&mut self.v.db[l])
                .for_each(|p, &g, m, v| {
                    *m = BETA1 * *m + (1.0 - BETA1) * g;
                    *v = BETA2 * *v + (1.0 - BETA2) * g * g;
                    *p -= lr * (*m / bc1) / ((*v / bc2).sqrt() + ADAM_EPS);
                });
        }
    }
}

fn standardized(nodes: &[(usize, f64)], mean: f64, scale: f64) -> Vec<(usize, f64)> {
    nodes
        .iter()
        .map(|&(row, t)| (row, (t - mean) / scale))
        .collect()
}

/// Root-mean-squared error of bucket-scale predictions over the rows picked
/// from each sample.
pub fn rmse_on(
    model: &GcnModel,
    samples: &[TrainSample],
    pick: impl Fn(&TrainSample) -> &[(usize, f64)],
) -> Result<f64, GcnError> {
    let mut sum_sq = 0.0;
    let mut count = 0usize;
    for sample in samples {
        let nodes = pick(sample);
        if nodes.is_empty() {
            continue;
        }
        let preds = super::predict(&sample.adj, &sample.features, model)?;
        for &(row, target) in nodes {
            let r = preds[row] - target;
            sum_sq += r * r;
        }
        count += nodes.len();
    }
    if count == 0 {
        return Err(GcnError::EmptyInput);
    }
    Ok((sum_sq / count as f64).sqrt())
}

/// Trains on the samples' train rows, tracks validation RMSE each epoch,
/// and returns the parameters from the best validation epoch. Fixed seeds
/// reproduce the run exactly.
pub fn train(
    samples: &[TrainSample],
    config: &TrainConfig,
) -> Result<(GcnModel, TrainLog), GcnError> {
    config.validate()?;
    if samples.is_empty() {
        return Err(GcnError::EmptyInput);
    }
    let f_in = samples[0].features.ncols();
    for s in samples {
        if s.features.ncols() != f_in {
            return Err(GcnError::DimensionMismatch {
                expected: f_in,
                found: s.features.ncols(),
            });
        }
    }

    let train_targets: Vec<f64> = samples
        .iter()
        .flat_map(|s| s.train_nodes.iter().map(|&(_, t)| t))
        .collect();
    if train_targets.is_empty() {
        return Err(GcnError::BadConfig("no training targets".to_string()));
    }
    let mean = train_targets.iter().sum::<f64>() / train_targets.len() as f64;
    let var = train_targets
        .iter()
        .map(|t| (t - mean).powi(2))
        .sum::<f64>()
        / train_targets.len() as f64;
    let scale = if var > 0.0 { var.sqrt() } else { 1.0 };

    let mut model = init_model(f_in, derive_seed(config.seed, SALT_INIT))?;
    model.output_mean = mean;
    model.output_scale = scale;
    model.config = config.clone();

    let std_train: Vec<Vec<(usize, f64)>> = samples
        .iter()
        .map(|s| standardized(&s.train_nodes, mean, scale))
        .collect();
    let has_val = samples.iter().any(|s| !s.val_nodes.is_empty());

    let mut adam = Adam::new(&model);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut order_rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, SALT_ORDER));
    let mut log = TrainLog {
        epoch_train_mse: Vec::with_capacity(config.epochs),
        epoch_val_rmse: Vec::with_capacity(config.epochs),
        best_epoch: 0,
        best_val_rmse: f64::INFINITY,
    };
    let mut best_layers = model.layers.clone();

    for epoch in 1..=config.epochs {
        order.shuffle(&mut order_rng);
        let mut epoch_loss = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(config.batch_size) {
            // parallel per-sample passes, deterministic in-order reduction
            let parts: Vec<Result<(f64, Gradients), GcnError>> = chunk
                .par_iter()
                .map(|&ix| {
                    let cache = forward_cached(&samples[ix].adj, &samples[ix].features, &model)?;
                    backward(&samples[ix].adj, &model, &cache, &std_train[ix])
                })
                .collect();
            let mut batch_loss = 0.0;
            let mut grads = Gradients::zeros_like(&model);
            let mut contributing = 0usize;
            for part in parts {
                match part {
                    Ok((loss, g)) => {
                        batch_loss += loss;
                        grads.add(&g);
                        contributing += 1;
                    }
                    // subgraphs with no train rows carry no signal
                    Err(GcnError::EmptyInput) => {}
                    Err(GcnError::NonFiniteForward { .. }) => {
                        return Err(GcnError::Diverged { epoch });
                    }
                    Err(e) => return Err(e),
                }
            }
            if contributing == 0 {
                continue;
            }
            batch_loss /= contributing as f64;
            grads.scale(1.0 / contributing as f64);
            if !batch_loss.is_finite() {
                return Err(GcnError::Diverged { epoch });
            }
            adam.step(&mut model.layers, &grads, config.learning_rate);
            epoch_loss += batch_loss;
            batches += 1;
        }
        let train_mse = if batches > 0 { epoch_loss / batches as f64 } else { 0.0 };
        log.epoch_train_mse.push(train_mse);

        // selection metric: validation RMSE, or training RMSE when no
        // validation rows exist
        let picked = if has_val {
            rmse_on(&model, samples, |s| &s.val_nodes)
        } else {
            rmse_on(&model, samples, |s| &s.train_nodes)
        };
        let metric = match picked {
            Ok(m) if m.is_finite() => m,
            Ok(_) | Err(GcnError::NonFiniteForward { .. }) => {
                return Err(GcnError::Diverged { epoch })
            }
            Err(e) => return Err(e),
        };
        log.epoch_val_rmse.push(metric);
        if metric < log.best_val_rmse {
            log.best_val_rmse = metric;
            log.best_epoch = epoch;
            best_layers.clone_from(&model.layers);
        }
    }

    model.layers = best_layers;
    model.best_epoch = log.best_epoch;
    Ok((model, log))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gcn::normalized_adjacency;

    fn line_sample(n: usize, targets: &[(usize, f64)]) -> TrainSample {
        let edges: Vec<(u32, u32)> = (0..n as u32 - 1).map(|i| (i, i + 1)).collect();
        TrainSample {
            adj: normalized_adjacency(n, edges).unwrap(),
            features: Array2::from_shape_fn((n, 1), |(i, _)| i as f64 / n as f64 + 0.1),
            train_nodes: targets.to_vec(),
            val_nodes: Vec::new(),
            test_nodes: Vec::new(),
        }
    }

    #[test]
    fn split_fractions_partition_the_slugs() {
        let slugs: Vec<String> = (0..100).map(|i| format!("c{i}")).collect();
        let config = TrainConfig::default();
        let split = split_collections(&slugs, &config).unwrap();
        assert_eq!(split.train.len(), 70);
        assert_eq!(split.val.len(), 15);
        assert_eq!(split.test.len(), 15);
        let mut all: Vec<&String> = split
            .train
            .iter()
            .chain(&split.val)
            .chain(&split.test)
            .collect();
        all.sort_unstable();
        all.dedup();
        assert_eq!(all.len(), 100);
    }

    #[test]
    fn split_is_seed_deterministic() {
        let slugs: Vec<String> = (0..40).map(|i| format!("c{i}")).collect();
        let config = TrainConfig::default();
        assert_eq!(
            split_collections(&slugs, &config).unwrap(),
            split_collections(&slugs, &config).unwrap()
        );
        let other = TrainConfig {
            seed: 1,
            ..TrainConfig::default()
        };
        assert_ne!(
            split_collections(&slugs, &config).unwrap().train,
            split_collections(&slugs, &other).unwrap().train
        );
    }

    #[test]
    fn tiny_graph_overfits() {
        let sample = line_sample(6, &[(0, 10.0), (2, 30.0), (4, 20.0), (5, 45.0)]);
        let config = TrainConfig {
            epochs: 4_000,
            batch_size: 1,
            learning_rate: 0.02,
            seed: 3,
            ..TrainConfig::default()
        };
        let (model, log) = train(&[sample.clone()], &config).unwrap();
        // standardized train MSE < 1e-3 means near-exact memorization
        assert!(
            *log.epoch_train_mse.last().unwrap() < 1e-3,
            "final mse {}",
            log.epoch_train_mse.last().unwrap()
        );
        let preds = crate::gcn::predict(&sample.adj, &sample.features, &model).unwrap();
        for &(row, t) in &sample.train_nodes {
            assert!((preds[row] - t).abs() < 2.0, "row {row}: {} vs {t}", preds[row]);
        }
    }

    #[test]
    fn training_is_bit_reproducible() {
        let sample = line_sample(8, &[(1, 5.0), (3, 70.0), (6, 22.0)]);
        let config = TrainConfig {
            epochs: 40,
            seed: 11,
            ..TrainConfig::default()
        };
        let (a, log_a) = train(&[sample.clone()], &config).unwrap();
        let (b, log_b) = train(&[sample], &config).unwrap();
        assert_eq!(a, b);
        assert_eq!(log_a, log_b);
    }

    #[test]
    fn bad_config_is_rejected() {
        let sample = line_sample(4, &[(0, 1.0)]);
        for config in [
            TrainConfig { epochs: 0, ..TrainConfig::default() },
            TrainConfig { batch_size: 0, ..TrainConfig::default() },
            TrainConfig { learning_rate: 0.0, ..TrainConfig::default() },
            TrainConfig { train_fraction: 0.9, val_fraction: 0.2, ..TrainConfig::default() },
        ] {
            assert!(matches!(
                train(&[sample.clone()], &config),
                Err(GcnError::BadConfig(_))
            ));
        }
    }

    #[test]
    fn divergent_learning_rate_aborts_with_epoch() {
        let sample = line_sample(6, &[(0, 90.0), (5, 5.0)]);
        let config = TrainConfig {
            epochs: 2_000,
            learning_rate: 1e200,
            ..TrainConfig::default()
        };
        match train(&[sample], &config) {
            Err(GcnError::Diverged { epoch }) => assert!(epoch >= 1),
            other => panic!("expected divergence, got {other:?}"),
        }
    }
}
