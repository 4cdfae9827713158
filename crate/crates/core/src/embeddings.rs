//! Collection centroids, visual distinctiveness, and centroid stability
//! under subsampling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::derive_seed;
use crate::model::EmbeddingRecord;

#[derive(Debug, Error, PartialEq)]
pub enum EmbeddingsError {
    #[error("no embeddings supplied")]
    Empty,
    #[error("expected embeddings for collection {expected:?}, found {found:?}")]
    MixedCollections { expected: String, found: String },
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("sample size {size} exceeds population {population}")]
    SizeExceedsPopulation { size: usize, population: usize },
}

/// Component-wise mean of a seeded subsample of one collection's embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct Centroid {
    pub collection: String,
    pub vector: Vec<f64>,
    /// Effective sample size after clamping to the population.
    pub sample_size: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistinctivenessScore {
    pub token_id: String,
    pub distance: f64,
}

/// Mean relative centroid-distance error for one subsample size.
#[derive(Debug, Clone, PartialEq)]
pub struct StabilityPoint {
    pub size: usize,
    /// One relative difference per trial: mean_i |d_true_i − d_sub_i| over
    /// the mean true distance.
    pub per_trial: Vec<f64>,
    pub mean_relative_difference: f64,
}

/// Default subsample size for centroids.
pub const DEFAULT_SAMPLE_SIZE: usize = 50;

/// Uniform sample without replacement of `min(sample_size, n)` embeddings,
/// then the component-wise arithmetic mean. The sample is a deterministic
/// function of the seed.
pub fn centroid(
    embeddings: &[EmbeddingRecord],
    sample_size: usize,
    seed: u64,
) -> Result<Centroid, EmbeddingsError> {
    let first = embeddings.first().ok_or(EmbeddingsError::Empty)?;
    let collection = first.collection.clone();
    let dim = first.vector.len();
    for e in embeddings {
        if e.collection != collection {
            return Err(EmbeddingsError::MixedCollections {
                expected: collection,
                found: e.collection.clone(),
            });
        }
        if e.vector.len() != dim {
            return Err(EmbeddingsError::DimensionMismatch {
                left: dim,
                right: e.vector.len(),
            });
        }
    }

    let effective = sample_size.min(embeddings.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen: Vec<usize> =
        rand::seq::index::sample(&mut rng, embeddings.len(), effective).into_vec();
    // Summation order must depend only on the chosen set, not the draw
    // order, so equal samples always produce bit-identical centroids.
    chosen.sort_unstable();

    let mut sums = vec![0.0f64; dim];
    for idx in chosen {
        for (s, v) in sums.iter_mut().zip(&embeddings[idx].vector) {
            *s += *v as f64;
        }
    }
    for s in &mut sums {
        *s /= effective as f64;
    }
    Ok(Centroid {
        collection,
        vector: sums,
        sample_size: effective,
        seed,
    })
}

/// Euclidean distance between a token embedding and its collection centroid.
pub fn visual_distinctiveness(
    embedding: &[f32],
    centroid: &Centroid,
) -> Result<f64, EmbeddingsError> {
    if embedding.len() != centroid.vector.len() {
        return Err(EmbeddingsError::DimensionMismatch {
            left: embedding.len(),
            right: centroid.vector.len(),
        });
    }
    let sum_sq: f64 = embedding
        .iter()
        .zip(&centroid.vector)
        .map(|(a, b)| {
            let d = *a as f64 - b;
            d * d
        })
        .sum();
    Ok(sum_sq.sqrt())
}

pub fn distinctiveness_scores(
    embeddings: &[EmbeddingRecord],
    centroid: &Centroid,
) -> Result<Vec<DistinctivenessScore>, EmbeddingsError> {
    embeddings
        .iter()
        .map(|e| {
            Ok(DistinctivenessScore {
                token_id: e.token_id.clone(),
                distance: visual_distinctiveness(&e.vector, centroid)?,
            })
        })
        .collect()
}

/// How far subsampled-centroid distances stray from true-centroid distances.
///
/// For each size and trial, every embedding's distance is computed against
/// the true (full-population) centroid and against a fresh subsample
/// centroid; the mean absolute difference is reported relative to the mean
/// true distance.
pub fn stability_curve(
    embeddings: &[EmbeddingRecord],
    sizes: &[usize],
    trials: usize,
    seed: u64,
) -> Result<Vec<StabilityPoint>, EmbeddingsError> {
    if embeddings.is_empty() {
        return Err(EmbeddingsError::Empty);
    }
    let population = embeddings.len();
    for &size in sizes {
        if size > population {
            return Err(EmbeddingsError::SizeExceedsPopulation { size, population });
        }
    }

    let true_centroid = centroid(embeddings, population, seed)?;
    let true_distances: Vec<f64> = embeddings
        .iter()
        .map(|e| visual_distinctiveness(&e.vector, &true_centroid))
        .collect::<Result<_, _>>()?;
    let mean_true = true_distances.iter().sum::<f64>() / population as f64;

    let mut points = Vec::with_capacity(sizes.len());
    for (si, &size) in sizes.iter().enumerate() {
        let mut per_trial = Vec::with_capacity(trials);
        for trial in 0..trials {
            let trial_seed = derive_seed(seed, (si as u64) << 32 | trial as u64);
            let sub = centroid(embeddings, size, trial_seed)?;
            let mut sum_abs = 0.0;
            for (e, &d_true) in embeddings.iter().zip(&true_distances) {
                let d_sub = visual_distinctiveness(&e.vector, &sub)?;
                sum_abs += (d_true - d_sub).abs();
            }
            let mean_abs = sum_abs / population as f64;
            per_trial.push(if mean_true > 0.0 { mean_abs / mean_true } else { 0.0 });
        }
        let mean = per_trial.iter().sum::<f64>() / trials.max(1) as f64;
        points.push(StabilityPoint {
            size,
            per_trial,
            mean_relative_difference: mean,
        });
    }
    Ok(points)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::EMBEDDING_DIM;

    fn record(collection: &str, token_id: &str, vector: Vec<f32>) -> EmbeddingRecord {
        EmbeddingRecord {
            collection: collection.to_string(),
            token_id: token_id.to_string(),
            vector,
        }
    }

    #[test]
    fn identical_embeddings_give_that_vector() {
        let v: Vec<f32> = (0..EMBEDDING_DIM).map(|i| (i as f32).cos()).collect();
        let records: Vec<_> = (0..10)
            .map(|i| record("c", &i.to_string(), v.clone()))
            .collect();
        for sample_size in [1, 3, 10, 50] {
            let c = centroid(&records, sample_size, 7).unwrap();
            for (a, b) in c.vector.iter().zip(&v) {
                assert!((a - *b as f64).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn two_point_mean() {
        let mut a = vec![0.0f32; EMBEDDING_DIM];
        let mut b = vec![0.0f32; EMBEDDING_DIM];
        a[0] = 0.0;
        b[0] = 2.0;
        let records = vec![record("c", "1", a), record("c", "2", b)];
        let c = centroid(&records, 2, 0).unwrap();
        assert_eq!(c.vector[0], 1.0);
        assert!(c.vector[1..].iter().all(|&x| x == 0.0));
        assert_eq!(c.sample_size, 2);
    }

    #[test]
    fn sample_size_clamps_to_population() {
        let records = vec![record("c", "1", vec![1.0; 4])];
        let c = centroid(&records, 50, 0).unwrap();
        assert_eq!(c.sample_size, 1);
        assert_eq!(c.vector, vec![1.0; 4]);
    }

    #[test]
    fn same_seed_same_centroid() {
        let records: Vec<_> = (0..100)
            .map(|i| record("c", &i.to_string(), vec![i as f32; 8]))
            .collect();
        let a = centroid(&records, 10, 42).unwrap();
        let b = centroid(&records, 10, 42).unwrap();
        assert_eq!(a, b);
        let c = centroid(&records, 10, 43).unwrap();
        assert_ne!(a.vector, c.vector);
    }

    #[test]
    fn distance_zero_iff_equal() {
        let v: Vec<f32> = (0..8).map(|i| i as f32).collect();
        let c = Centroid {
            collection: "c".to_string(),
            vector: v.iter().map(|&x| x as f64).collect(),
            sample_size: 1,
            seed: 0,
        };
        assert_eq!(visual_distinctiveness(&v, &c).unwrap(), 0.0);
        let mut w = v.clone();
        w[3] += 3.0;
        assert!((visual_distinctiveness(&w, &c).unwrap() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let c = Centroid {
            collection: "c".to_string(),
            vector: vec![0.0; 4],
            sample_size: 1,
            seed: 0,
        };
        assert!(matches!(
            visual_distinctiveness(&[0.0; 5], &c),
            Err(EmbeddingsError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn full_population_stability_is_zero() {
        let records: Vec<_> = (0..20)
            .map(|i| record("c", &i.to_string(), vec![(i as f32).sin(); 6]))
            .collect();
        let points = stability_curve(&records, &[20], 5, 9).unwrap();
        assert!(points[0].mean_relative_difference.abs() < 1e-12);
    }

    #[test]
    fn oversized_stability_request_fails() {
        let records = vec![record("c", "1", vec![0.0; 4])];
        assert_eq!(
            stability_curve(&records, &[2], 1, 0),
            Err(EmbeddingsError::SizeExceedsPopulation {
                size: 2,
                population: 1
            })
        );
    }
}
