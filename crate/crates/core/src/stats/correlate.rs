//! Correlation coefficients, their p-values, and univariate least squares.
//!
//! p-values switch implementation by sample size: the t approximation needs
//! a reasonable n, so small samples get a permutation test instead, exact
//! (every permutation) when that is affordable and seeded sampling when not.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::derive_seed;

use super::StatsError;

/// Sample size at and above which the t approximation is used.
const T_APPROX_MIN_N: usize = 10;
/// Largest n whose full permutation set (n!) is enumerated.
const EXACT_PERM_MAX_N: usize = 8;
const SAMPLED_PERMUTATIONS: usize = 100_000;
/// Fixed base seed for sampled permutation tests, so p-values are stable.
const PERM_SEED: u64 = 0x7065726d;
/// Guards the |r| comparison in permutation counting against roundoff.
const PERM_TIE_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Pearson,
    Spearman,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrelationResult {
    pub coefficient: f64,
    pub p_value: f64,
    pub n: usize,
    pub method: Method,
}

fn check_pair(x: &[f64], y: &[f64]) -> Result<(), StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    if x.len() < 3 {
        return Err(StatsError::TooFewPoints {
            required: 3,
            found: x.len(),
        });
    }
    Ok(())
}

fn centered_moments(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    let mut sxy = 0.0;
    for (a, b) in x.iter().zip(y) {
        let dx = a - mx;
        let dy = b - my;
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    (sxx, syy, sxy)
}

fn coefficient_of(x: &[f64], y: &[f64]) -> Result<f64, StatsError> {
    let (sxx, syy, sxy) = centered_moments(x, y);
    if sxx == 0.0 || syy == 0.0 {
        return Err(StatsError::ConstantInput);
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

fn t_approx_p(r: f64, n: usize) -> f64 {
    if (1.0 - r * r) <= 0.0 {
        return 0.0;
    }
    let df = (n - 2) as f64;
    let t = r * (df / (1.0 - r * r)).sqrt();
    let dist = StudentsT::new(0.0, 1.0, df).expect("positive degrees of freedom");
    2.0 * (1.0 - dist.cdf(t.abs()))
}

/// Counts permutations of y whose |r| meets the observed |r| over all n!
/// orderings (Heap's algorithm).
fn exact_permutation_p(x: &[f64], y: &[f64], observed: f64) -> f64 {
    let mut perm = y.to_vec();
    let n = perm.len();
    let mut counters = vec![0usize; n];
    let mut hits = 0u64;
    let mut total = 0u64;
    let mut tally = |p: &[f64]| {
        total += 1;
        if let Ok(r) = coefficient_of(x, p) {
            if r.abs() >= observed.abs() - PERM_TIE_EPS {
                hits += 1;
            }
        }
    };
    tally(&perm);
    let mut i = 0;
    while i < n {
        if counters[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(counters[i], i);
            }
            tally(&perm);
            counters[i] += 1;
            i = 0;
        } else {
            counters[i] = 0;
            i += 1;
        }
    }
    hits as f64 / total as f64
}

fn sampled_permutation_p(x: &[f64], y: &[f64], observed: f64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(PERM_SEED, y.len() as u64));
    let mut perm = y.to_vec();
    let mut hits = 0u64;
    for _ in 0..SAMPLED_PERMUTATIONS {
        perm.shuffle(&mut rng);
        if let Ok(r) = coefficient_of(x, &perm) {
            if r.abs() >= observed.abs() - PERM_TIE_EPS {
                hits += 1;
            }
        }
    }
    // add-one correction keeps sampled p-values off exact zero
    (hits + 1) as f64 / (SAMPLED_PERMUTATIONS + 1) as f64
}

fn two_sided_p(x: &[f64], y: &[f64], r: f64) -> f64 {
    let n = x.len();
    if n >= T_APPROX_MIN_N {
        t_approx_p(r, n)
    } else if n <= EXACT_PERM_MAX_N {
        exact_permutation_p(x, y, r)
    } else {
        sampled_permutation_p(x, y, r)
    }
}

/// Product-moment correlation with a two-sided p-value.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<CorrelationResult, StatsError> {
    check_pair(x, y)?;
    let r = coefficient_of(x, y)?;
    Ok(CorrelationResult {
        coefficient: r,
        p_value: two_sided_p(x, y, r),
        n: x.len(),
        method: Method::Pearson,
    })
}

/// Ranks with ties replaced by the average of the positions they span.
pub fn mid_ranks(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i + 1;
        while j < n && values[order[j]] == values[order[i]] {
            j += 1;
        }
        // positions i..j are tied; 1-based ranks i+1 ..= j average to:
        let shared = (i + 1 + j) as f64 / 2.0;
        for &ix in &order[i..j] {
            ranks[ix] = shared;
        }
        i = j;
    }
    ranks
}

/// Rank correlation: the product-moment coefficient over mid-ranks.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<CorrelationResult, StatsError> {
    check_pair(x, y)?;
    let rx = mid_ranks(x);
    let ry = mid_ranks(y);
    let r = coefficient_of(&rx, &ry)?;
    Ok(CorrelationResult {
        coefficient: r,
        p_value: two_sided_p(&rx, &ry, r),
        n: x.len(),
        method: Method::Spearman,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OlsFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Least-squares line y = slope·x + intercept with r² = 1 − SSE/SST.
/// A constant response has SST = 0 and reports r² = 0.
pub fn univariate_ols(x: &[f64], y: &[f64]) -> Result<OlsFit, StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    if x.len() < 2 {
        return Err(StatsError::TooFewPoints {
            required: 2,
            found: x.len(),
        });
    }
    let (sxx, syy, sxy) = centered_moments(x, y);
    if sxx == 0.0 {
        return Err(StatsError::ConstantInput);
    }
    let slope = sxy / sxx;
    let n = x.len() as f64;
    let intercept = y.iter().sum::<f64>() / n - slope * x.iter().sum::<f64>() / n;
    let r_squared = if syy == 0.0 {
        0.0
    } else {
        // SSE = SST − slope·SXY for the least-squares line
        (1.0 - (syy - slope * sxy) / syy).clamp(0.0, 1.0)
    };
    Ok(OlsFit {
        slope,
        intercept,
        r_squared,
    })
}
