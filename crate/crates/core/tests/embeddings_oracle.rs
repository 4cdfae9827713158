//! Centroid and distinctiveness results checked against independent
//! oracles and against the symmetries the geometry must respect.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use veblen::embeddings::{centroid, stability_curve, visual_distinctiveness};
use veblen::model::EmbeddingRecord;

fn gaussian_cloud(seed: u64, n: usize, dim: usize) -> Vec<EmbeddingRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| EmbeddingRecord {
            collection: "c".to_string(),
            token_id: i.to_string(),
            vector: (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal) as f32).collect(),
        })
        .collect()
}

#[test]
fn full_sample_centroid_matches_independent_mean() {
    let records = gaussian_cloud(5, 600, 384);
    let c = centroid(&records, 600, 123).unwrap();
    assert_eq!(c.sample_size, 600);
    // Oracle: per-dimension mean accumulated over records in reverse order,
    // sharing nothing with the library's summation.
    for d in 0..384 {
        let mut sum = 0.0f64;
        for r in records.iter().rev() {
            sum += r.vector[d] as f64;
        }
        let mean = sum / 600.0;
        assert!(
            (c.vector[d] - mean).abs() < 1e-9,
            "dim {d}: {} vs {}",
            c.vector[d],
            mean
        );
    }
}

#[test]
fn distance_matches_naive_oracle() {
    let records = gaussian_cloud(8, 40, 384);
    let c = centroid(&records, 25, 9).unwrap();
    for r in &records {
        let d = visual_distinctiveness(&r.vector, &c).unwrap();
        // reverse-order accumulation again, so rounding paths differ
        let mut sum_sq = 0.0f64;
        for i in (0..384).rev() {
            let diff = r.vector[i] as f64 - c.vector[i];
            sum_sq += diff * diff;
        }
        assert!((d - sum_sq.sqrt()).abs() < 1e-9);
    }
}

#[test]
fn stability_error_shrinks_as_samples_grow() {
    let records = gaussian_cloud(21, 2_000, 64);
    let sizes = [5usize, 10, 25, 50, 100];
    let points = stability_curve(&records, &sizes, 20, 77).unwrap();
    assert_eq!(points.len(), sizes.len());
    for w in points.windows(2) {
        assert!(
            w[1].mean_relative_difference < w[0].mean_relative_difference,
            "size {} gave {}, size {} gave {}",
            w[0].size,
            w[0].mean_relative_difference,
            w[1].size,
            w[1].mean_relative_difference
        );
    }
    let at_default = points.iter().find(|p| p.size == 50).unwrap();
    assert!(
        at_default.mean_relative_difference < 0.05,
        "got {}",
        at_default.mean_relative_difference
    );
    for p in &points {
        assert_eq!(p.per_trial.len(), 20);
        assert!(p.per_trial.iter().all(|v| v.is_finite() && *v >= 0.0));
    }
}

#[test]
fn translation_shifts_centroids_and_preserves_distances() {
    let records = gaussian_cloud(13, 300, 64);
    let shift: Vec<f32> = (0..64).map(|i| ((i * 7 % 13) as f32) - 6.0).collect();
    let shifted: Vec<EmbeddingRecord> = records
        .iter()
        .map(|r| EmbeddingRecord {
            collection: r.collection.clone(),
            token_id: r.token_id.clone(),
            vector: r.vector.iter().zip(&shift).map(|(v, s)| v + s).collect(),
        })
        .collect();

    // Same seed and same population, so the same indices are drawn. The
    // shifted components round to f32, so the tolerance is f32-scale.
    let c = centroid(&records, 50, 4).unwrap();
    let cs = centroid(&shifted, 50, 4).unwrap();
    for ((a, b), s) in c.vector.iter().zip(&cs.vector).zip(&shift) {
        assert!((a + *s as f64 - b).abs() < 1e-6);
    }
    for (r, rs) in records.iter().zip(&shifted) {
        let d = visual_distinctiveness(&r.vector, &c).unwrap();
        let ds = visual_distinctiveness(&rs.vector, &cs).unwrap();
        assert!((d - ds).abs() < 1e-4);
    }
}

#[test]
fn rotation_preserves_distances() {
    let records = gaussian_cloud(17, 200, 64);
    // Givens rotation in the (3, 40) plane
    let (i, j, theta) = (3usize, 40usize, 0.83f64);
    let (cos, sin) = (theta.cos(), theta.sin());
    let rotate = |v: &[f32]| -> Vec<f32> {
        let mut out: Vec<f32> = v.to_vec();
        let (a, b) = (v[i] as f64, v[j] as f64);
        out[i] = (a * cos - b * sin) as f32;
        out[j] = (a * sin + b * cos) as f32;
        out
    };
    let rotated: Vec<EmbeddingRecord> = records
        .iter()
        .map(|r| EmbeddingRecord {
            collection: r.collection.clone(),
            token_id: r.token_id.clone(),
            vector: rotate(&r.vector),
        })
        .collect();

    let c = centroid(&records, 50, 6).unwrap();
    let cr = centroid(&rotated, 50, 6).unwrap();
    // the mean commutes with any linear map
    let c_then_rotated = {
        let as_f32: Vec<f32> = c.vector.iter().map(|&x| x as f32).collect();
        rotate(&as_f32)
    };
    for (a, b) in c_then_rotated.iter().zip(&cr.vector) {
        assert!((*a as f64 - b).abs() < 1e-4);
    }
    for (r, rr) in records.iter().zip(&rotated) {
        let d = visual_distinctiveness(&r.vector, &c).unwrap();
        let dr = visual_distinctiveness(&rr.vector, &cr).unwrap();
        assert!((d - dr).abs() < 1e-4, "{d} vs {dr}");
    }
}
