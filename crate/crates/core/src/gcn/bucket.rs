//! Percentile bucket targets for floor prices, and the constant median
//! baseline they are judged against.

use std::collections::BTreeMap;

use crate::money::Eth;

use super::GcnError;

/// Floor prices mapped to percentile buckets 0..=99. Collections with equal
/// prices land in the same bucket, so point masses survive bucketing.
#[derive(Debug, Clone, PartialEq)]
pub struct PercentileTargets {
    pub bucket: BTreeMap<String, u8>,
    /// Global sorted price table the buckets were computed from.
    pub sorted_prices: Vec<Eth>,
}

impl PercentileTargets {
    /// Bucket an arbitrary price against the stored table: the fraction of
    /// table entries strictly below it, scaled to 0..=99.
    pub fn bucket_of(&self, price: Eth) -> u8 {
        let below = self.sorted_prices.partition_point(|&p| p < price);
        let raw = 100 * below / self.sorted_prices.len();
        raw.min(99) as u8
    }
}

/// bucket = floor(100 × strictly-below-rank / n), capped at 99.
pub fn bucketize_floor_prices(prices: &[(String, Eth)]) -> Result<PercentileTargets, GcnError> {
    if prices.is_empty() {
        return Err(GcnError::EmptyInput);
    }
    let mut sorted_prices: Vec<Eth> = prices.iter().map(|(_, p)| *p).collect();
    sorted_prices.sort_unstable();
    let n = sorted_prices.len();
    let bucket = prices
        .iter()
        .map(|(slug, price)| {
            let below = sorted_prices.partition_point(|p| p < price);
            let raw = 100 * below / n;
            (slug.clone(), raw.min(99) as u8)
        })
        .collect();
    Ok(PercentileTargets {
        bucket,
        sorted_prices,
    })
}

/// The constant predictor: always answer the median bucket. Returns the
/// prediction and its root-mean-squared error over all targets.
pub fn median_baseline(targets: &PercentileTargets) -> Result<(f64, f64), GcnError> {
    if targets.bucket.is_empty() {
        return Err(GcnError::EmptyInput);
    }
    let mut labels: Vec<u8> = targets.bucket.values().copied().collect();
    labels.sort_unstable();
    let n = labels.len();
    let median = if n % 2 == 1 {
        labels[n / 2] as f64
    } else {
        (labels[n / 2 - 1] as f64 + labels[n / 2] as f64) / 2.0
    };
    let mse = labels
        .iter()
        .map(|&b| (b as f64 - median).powi(2))
        .sum::<f64>()
        / n as f64;
    Ok((median, mse.sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn prices(values: &[i64]) -> Vec<(String, Eth)> {
        values
            .iter()
            .enumerate()
            .map(|(i, &v)| (format!("c{i}"), Eth::from_eth(v as i128)))
            .collect()
    }

    #[test]
    fn equal_prices_share_one_bucket() {
        let t = bucketize_floor_prices(&prices(&[5, 5, 5, 5])).unwrap();
        let buckets: Vec<u8> = t.bucket.values().copied().collect();
        assert_eq!(buckets, vec![0, 0, 0, 0]);
    }

    #[test]
    fn one_to_hundred_maps_onto_zero_to_ninety_nine() {
        let input: Vec<i64> = (1..=100).collect();
        let t = bucketize_floor_prices(&prices(&input)).unwrap();
        for (i, v) in input.iter().enumerate() {
            assert_eq!(t.bucket[&format!("c{i}")], (*v - 1) as u8);
        }
    }

    #[test]
    fn bucketing_is_monotone_in_price() {
        let t = bucketize_floor_prices(&prices(&[9, 2, 7, 2, 40, 1])).unwrap();
        let pairs = prices(&[9, 2, 7, 2, 40, 1]);
        for (a, pa) in &pairs {
            for (b, pb) in &pairs {
                if pa <= pb {
                    assert!(t.bucket[a] <= t.bucket[b]);
                }
            }
        }
    }

    #[test]
    fn median_baseline_hand_cases() {
        let single = bucketize_floor_prices(&prices(&[7])).unwrap();
        let mut forced = single.clone();
        forced.bucket.insert("c0".into(), 7);
        let (pred, rmse) = median_baseline(&forced).unwrap();
        assert_eq!(pred, 7.0);
        assert_eq!(rmse, 0.0);

        let mut t = bucketize_floor_prices(&prices(&[1, 2, 9])).unwrap();
        t.bucket.insert("c0".into(), 1);
        t.bucket.insert("c1".into(), 2);
        t.bucket.insert("c2".into(), 9);
        let (pred, rmse) = median_baseline(&t).unwrap();
        assert_eq!(pred, 2.0);
        assert!((rmse - (50.0f64 / 3.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn empty_input_is_an_error() {
        assert!(matches!(
            bucketize_floor_prices(&[]),
            Err(GcnError::EmptyInput)
        ));
    }

    #[test]
    fn bucket_of_agrees_with_construction() {
        let pairs = prices(&[3, 1, 4, 1, 5, 9, 2, 6]);
        let t = bucketize_floor_prices(&pairs).unwrap();
        for (slug, price) in &pairs {
            assert_eq!(t.bucket_of(*price), t.bucket[slug]);
        }
    }
}
