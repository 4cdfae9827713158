//! Central-difference verification of the analytic gradients.
//!
//! Perturbing one parameter of layer l touches a single column of that
//! layer's pre-activation, and the propagated input P_l = Â · H_(l−1) does
//! not depend on layer l's parameters at all. Each probe therefore reuses
//! the cached P_l, edits one column of Z_l, and reruns only the layers
//! after l, which keeps the full sweep over every parameter fast.

use ndarray::{Array1, Array2};
use rayon::prelude::*;

use super::prepare::SparseAdj;
use super::{backward, forward_cached, ForwardCache, GcnError, GcnModel};

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    /// Layer owning the worst parameter.
    pub worst_layer: usize,
    pub params_checked: usize,
}

#[derive(Clone, Copy)]
enum Param {
    Weight { layer: usize, row: usize, col: usize },
    Bias { layer: usize, col: usize },
}

/// Loss with one parameter nudged by `delta`, replaying layers `layer..`.
fn perturbed_loss(
    model: &GcnModel,
    adj: &SparseAdj,
    cache: &ForwardCache,
    labeled: &[(usize, f64)],
    param: Param,
    delta: f64,
) -> f64 {
    let last = model.layers.len() - 1;
    let (layer, col) = match param {
        Param::Weight { layer, col, .. } | Param::Bias { layer, col } => (layer, col),
    };

    // Z_l with only column `col` changed
    let mut z_col: Array1<f64> = cache.z[layer].column(col).to_owned();
    match param {
        Param::Weight { row, .. } => z_col.scaled_add(delta, &cache.p[layer].column(row)),
        Param::Bias { .. } => z_col += delta,
    }

    if layer == last {
        // output layer is linear and single-column
        return mse(&z_col, labeled);
    }

    let mut h: Array2<f64> = cache.z[layer].mapv(|v| v.max(0.0));
    h.column_mut(col).assign(&z_col.mapv(|v| v.max(0.0)));
    for l in layer + 1..=last {
        let p = adj.matmul(&h);
        let z = p.dot(&model.layers[l].w) + &model.layers[l].b;
        h = if l < last { z.mapv(|v| v.max(0.0)) } else { z };
    }
    mse(&h.column(0).to_owned(), labeled)
}

fn mse(outputs: &Array1<f64>, labeled: &[(usize, f64)]) -> f64 {
    let m = labeled.len() as f64;
    labeled
        .iter()
        .map(|&(row, t)| (outputs[row] - t).powi(2))
        .sum::<f64>()
        / m
}

/// Compares every analytic parameter gradient against central finite
/// differences with the given step. Targets are on the standardized scale
/// the loss is defined over.
pub fn gradient_check(
    model: &GcnModel,
    adj: &SparseAdj,
    features: &Array2<f64>,
    labeled: &[(usize, f64)],
    step: f64,
) -> Result<GradCheckReport, GcnError> {
    if !(step.is_finite() && step > 0.0) {
        return Err(GcnError::BadConfig("step must be positive".to_string()));
    }
    let cache = forward_cached(adj, features, model)?;
    let (_, grads) = backward(adj, model, &cache, labeled)?;

    let mut params: Vec<(Param, f64)> = Vec::new();
    for (l, layer) in model.layers.iter().enumerate() {
        let (rows, cols) = layer.w.dim();
        for row in 0..rows {
            for col in 0..cols {
                params.push((Param::Weight { layer: l, row, col }, grads.dw[l][[row, col]]));
            }
        }
        for col in 0..layer.b.len() {
            params.push((Param::Bias { layer: l, col }, grads.db[l][col]));
        }
    }

    let worst = params
        .par_iter()
        .map(|&(param, analytic)| {
            let plus = perturbed_loss(model, adj, &cache, labeled, param, step);
            let minus = perturbed_loss(model, adj, &cache, labeled, param, -step);
            let numeric = (plus - minus) / (2.0 * step);
            let denom = analytic.abs().max(numeric.abs()).max(1e-6);
            let rel = (analytic - numeric).abs() / denom;
            let layer = match param {
                Param::Weight { layer, .. } | Param::Bias { layer, .. } => layer,
            };
            (rel, layer)
        })
        .reduce(|| (0.0, 0), |a, b| if a.0 >= b.0 { a } else { b });

    Ok(GradCheckReport {
        max_relative_error: worst.0,
        worst_layer: worst.1,
        params_checked: params.len(),
    })
}
