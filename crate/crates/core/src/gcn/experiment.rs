//! What-if experiments on a trained model: perturb the ownership graph
//! around one collection many times and watch how its prediction moves.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::derive_seed;
use crate::graph::{
    perturb_edges, CollectionIx, OwnershipGraph, PerturbMode, PerturbWeighting, WalletMetrics,
};

use super::prepare::{feature_matrix, full_graph_adjacency, overlay_adjacency, FeatureSpec};
use super::{predict, GcnError, GcnModel};

const SALT_EXPERIMENT: u64 = 0x04;

/// One perturbation recipe, applied independently per sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PerturbPlan {
    pub mode: PerturbMode,
    pub weighting: PerturbWeighting,
    pub edge_count: usize,
}

/// Prediction deltas for one collection under repeated graph perturbation.
#[derive(Debug, Clone)]
pub struct DeltaSummary {
    pub target: CollectionIx,
    pub plan: PerturbPlan,
    pub base_prediction: f64,
    /// Per-sample change: perturbed prediction minus base prediction.
    pub deltas: Vec<f64>,
    pub mean_delta: f64,
    pub fraction_positive: f64,
}

/// Runs `sample_count` independent perturbations of the target collection's
/// edges and records how the model's prediction for it shifts each time.
/// A plan with `edge_count == 0` leaves every prediction bit-identical.
#[allow(clippy::too_many_arguments)]
pub fn predicted_delta_experiment(
    model: &GcnModel,
    graph: &OwnershipGraph,
    target: CollectionIx,
    plan: PerturbPlan,
    metrics: &WalletMetrics,
    spec: &FeatureSpec,
    sample_count: usize,
    seed: u64,
) -> Result<DeltaSummary, GcnError> {
    if sample_count == 0 {
        return Err(GcnError::EmptyInput);
    }
    let (base_adj, space) = full_graph_adjacency(graph)?;
    let features = feature_matrix(graph, &space, spec)?;
    let row = space
        .collection_row(target)
        .ok_or(GcnError::NodeOutOfRange {
            node: target as usize,
            nodes: space.n(),
        })?;
    let base_prediction = predict(&base_adj, &features, model)?[row];

    let base_seed = derive_seed(seed, SALT_EXPERIMENT);
    let deltas: Vec<f64> = (0..sample_count)
        .into_par_iter()
        .map(|s| -> Result<f64, GcnError> {
            let draw_seed = derive_seed(base_seed, s as u64 + 1);
            let (_, overlay) = perturb_edges(
                graph,
                target,
                plan.edge_count,
                plan.mode,
                plan.weighting,
                metrics,
                draw_seed,
            )?;
            let (adj, overlay_space) = overlay_adjacency(&overlay)?;
            debug_assert_eq!(overlay_space.n(), space.n());
            let prediction = predict(&adj, &features, model)?[row];
            Ok(prediction - base_prediction)
        })
        .collect::<Result<_, _>>()?;

    let mean_delta = deltas.iter().sum::<f64>() / deltas.len() as f64;
    let positive = deltas.iter().filter(|d| **d > 0.0).count();
    Ok(DeltaSummary {
        target,
        plan,
        base_prediction,
        mean_delta,
        fraction_positive: positive as f64 / deltas.len() as f64,
        deltas,
    })
}

/// Percentile bootstrap interval for the mean of `values`.
/// Returns (low, high) at the given two-sided confidence level.
pub fn bootstrap_mean_interval(
    values: &[f64],
    replicates: usize,
    confidence: f64,
    seed: u64,
) -> Result<(f64, f64), GcnError> {
    if values.is_empty() || replicates == 0 {
        return Err(GcnError::EmptyInput);
    }
    if !(0.0..1.0).contains(&confidence) || confidence <= 0.0 {
        return Err(GcnError::BadConfig(format!(
            "confidence {confidence} outside (0, 1)"
        )));
    }
    let mut means: Vec<f64> = (0..replicates)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, r as u64 + 1));
            let mut sum = 0.0;
            for _ in 0..values.len() {
                sum += values[rng.gen_range(0..values.len())];
            }
            sum / values.len() as f64
        })
        .collect();
    means.sort_by(|a, b| a.total_cmp(b));
    let alpha = (1.0 - confidence) / 2.0;
    let lo_ix = ((replicates as f64 * alpha) as usize).min(replicates - 1);
    let hi_ix = ((replicates as f64 * (1.0 - alpha)) as usize).min(replicates - 1);
    Ok((means[lo_ix], means[hi_ix]))
}
