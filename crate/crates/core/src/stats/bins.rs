//! Quantile binning of a response against a predictor, and correlations
//! recomputed after censoring the most extreme predictor values.
//!
//! Both functions orient the predictor so that LARGER means rarer or more
//! distinctive; rank-style inputs where 1 is rarest should be negated first.

use serde::{Deserialize, Serialize};

use super::correlate::{pearson, CorrelationResult};
use super::StatsError;

pub const DEFAULT_BIN_COUNT: usize = 20;
pub const DEFAULT_CENSOR_FRACTION: f64 = 0.10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileBin {
    /// 0-based bin index, least extreme first.
    pub index: usize,
    pub count: usize,
    pub mean_predictor: f64,
    pub mean_response: f64,
}

/// Splits points into k quantile bins by ascending predictor and reports the
/// mean response per bin. Nominal cut positions are floor(i·n/k); a run of
/// tied predictor values crossing a cut stays in the lower bin.
pub fn quantile_bins(
    predictor: &[f64],
    response: &[f64],
    k: usize,
) -> Result<Vec<QuantileBin>, StatsError> {
    if predictor.len() != response.len() {
        return Err(StatsError::LengthMismatch {
            left: predictor.len(),
            right: response.len(),
        });
    }
    if k == 0 {
        return Err(StatsError::BadFraction(0.0));
    }
    let n = predictor.len();
    if n < k {
        return Err(StatsError::TooFewPoints {
            required: k,
            found: n,
        });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| predictor[a].total_cmp(&predictor[b]).then(a.cmp(&b)));

    let mut bins = Vec::with_capacity(k);
    let mut start = 0usize;
    for i in 0..k {
        let mut end = ((i + 1) * n) / k;
        if end < start {
            end = start;
        }
        // ties straddling the cut belong to this (lower) bin
        while end > start && end < n && predictor[order[end]] == predictor[order[end - 1]] {
            end += 1;
        }
        if i == k - 1 {
            end = n;
        }
        if end == start {
            bins.push(QuantileBin {
                index: i,
                count: 0,
                mean_predictor: f64::NAN,
                mean_response: f64::NAN,
            });
            continue;
        }
        let slice = &order[start..end];
        let count = slice.len();
        let mean_predictor = slice.iter().map(|&ix| predictor[ix]).sum::<f64>() / count as f64;
        let mean_response = slice.iter().map(|&ix| response[ix]).sum::<f64>() / count as f64;
        bins.push(QuantileBin {
            index: i,
            count,
            mean_predictor,
            mean_response,
        });
        start = end;
    }
    Ok(bins)
}

/// Drops exactly ⌈fraction·n⌉ points with the largest predictor values
/// (most rare / most distinctive) and recomputes the correlation.
pub fn censored_correlation(
    predictor: &[f64],
    response: &[f64],
    censor_fraction: f64,
) -> Result<CorrelationResult, StatsError> {
    if predictor.len() != response.len() {
        return Err(StatsError::LengthMismatch {
            left: predictor.len(),
            right: response.len(),
        });
    }
    if !(0.0..1.0).contains(&censor_fraction) {
        return Err(StatsError::BadFraction(censor_fraction));
    }
    let n = predictor.len();
    let drop = (censor_fraction * n as f64).ceil() as usize;
    if n.saturating_sub(drop) < 3 {
        return Err(StatsError::TooFewPoints {
            required: drop + 3,
            found: n,
        });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| predictor[a].total_cmp(&predictor[b]).then(a.cmp(&b)));
    let kept = &order[..n - drop];
    let x: Vec<f64> = kept.iter().map(|&ix| predictor[ix]).collect();
    let y: Vec<f64> = kept.iter().map(|&ix| response[ix]).collect();
    pearson(&x, &y)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn twenty_points_in_twenty_bins_are_singletons() {
        let x: Vec<f64> = (1..=20).map(|i| i as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| v * 10.0).collect();
        let bins = quantile_bins(&x, &y, 20).unwrap();
        assert_eq!(bins.len(), 20);
        for (i, b) in bins.iter().enumerate() {
            assert_eq!(b.count, 1);
            assert_eq!(b.mean_predictor, (i + 1) as f64);
            assert_eq!(b.mean_response, ((i + 1) * 10) as f64);
        }
    }

    #[test]
    fn constant_response_gives_equal_bin_means() {
        let x: Vec<f64> = (0..200).map(|i| (i as f64).sin()).collect();
        let y = vec![4.25; 200];
        let bins = quantile_bins(&x, &y, 20).unwrap();
        assert!(bins.iter().all(|b| b.mean_response == 4.25));
        assert_eq!(bins.iter().map(|b| b.count).sum::<usize>(), 200);
    }

    #[test]
    fn bin_sizes_differ_by_at_most_one_without_ties() {
        let x: Vec<f64> = (0..103).map(|i| i as f64 * 1.5).collect();
        let y = vec![0.0; 103];
        let bins = quantile_bins(&x, &y, 20).unwrap();
        let min = bins.iter().map(|b| b.count).min().unwrap();
        let max = bins.iter().map(|b| b.count).max().unwrap();
        assert!(max - min <= 1, "sizes {min}..{max}");
        assert_eq!(bins.iter().map(|b| b.count).sum::<usize>(), 103);
    }

    #[test]
    fn boundary_ties_stay_in_the_lower_bin() {
        // ten 1.0s then ten 2.0s, k = 4: nominal cut at 5 falls inside the
        // run of 1.0s, so bin 0 absorbs the whole run
        let mut x = vec![1.0; 10];
        x.extend(vec![2.0; 10]);
        let y: Vec<f64> = (0..20).map(|i| i as f64).collect();
        let bins = quantile_bins(&x, &y, 4).unwrap();
        assert_eq!(bins[0].count, 10);
        assert_eq!(bins[1].count, 0);
        assert!(bins[1].mean_response.is_nan());
        assert_eq!(bins[2].count, 10);
        assert_eq!(bins[3].count, 0);
    }

    #[test]
    fn zero_censoring_equals_plain_pearson() {
        let x: Vec<f64> = (0..40).map(|i| i as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| v * v).collect();
        let plain = pearson(&x, &y).unwrap();
        let censored = censored_correlation(&x, &y, 0.0).unwrap();
        assert_eq!(plain.coefficient, censored.coefficient);
        assert_eq!(plain.n, censored.n);
    }

    #[test]
    fn censoring_removes_exactly_ceil_fn_points() {
        let x: Vec<f64> = (0..47).map(|i| i as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| v + 1.0).collect();
        let c = censored_correlation(&x, &y, 0.10).unwrap();
        assert_eq!(c.n, 47 - 5); // ceil(4.7) = 5
    }

    #[test]
    fn top_decile_effect_vanishes_under_censoring() {
        // flat response except the most extreme tenth, which spikes
        let x: Vec<f64> = (0..100).map(|i| i as f64).collect();
        let y: Vec<f64> = x
            .iter()
            .map(|&v| if v >= 90.0 { 50.0 + v } else { 5.0 + (v * 0.7).sin() * 0.1 })
            .collect();
        let full = pearson(&x, &y).unwrap();
        let censored = censored_correlation(&x, &y, 0.10).unwrap();
        assert!(full.coefficient > 0.5, "full {}", full.coefficient);
        assert!(
            censored.coefficient.abs() < 0.2,
            "censored {}",
            censored.coefficient
        );
    }
}
