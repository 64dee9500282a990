mod common;

use common::checks;
use foresight_core::quantizer::{train_kmeans, train_kmeans_traced, Codebook, KMeansParams, Sid};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Adjusted Rand index of two labelings.
fn ari(a: &[usize], b: &[usize]) -> f64 {
    let ka = a.iter().max().unwrap() + 1;
    let kb = b.iter().max().unwrap() + 1;
    let mut table = vec![vec![0u64; kb]; ka];
    for (&x, &y) in a.iter().zip(b) {
        table[x][y] += 1;
    }
    let c2 = |n: u64| (n * n.saturating_sub(1)) as f64 / 2.0;
    let sum_ij: f64 = table.iter().flatten().map(|&n| c2(n)).sum();
    let sum_a: f64 = table.iter().map(|r| c2(r.iter().sum())).sum();
    let sum_b: f64 = (0..kb).map(|j| c2(table.iter().map(|r| r[j]).sum())).sum();
    let expected = sum_a * sum_b / c2(a.len() as u64);
    (sum_ij - expected) / ((sum_a + sum_b) / 2.0 - expected)
}

#[test]
fn inertia_never_increases() {
    checks::kmeans_inertia_monotone(40, 21).unwrap();
}

#[test]
fn codebook_bytes_roundtrip_exactly() {
    checks::codebook_roundtrip(200, 22).unwrap();
}

#[test]
fn every_iteration_is_a_lloyd_step() {
    let (points, _) = checks::gaussian_blobs(23, 4, 3, 30, 2.0);
    let params = KMeansParams {
        size: 5,
        max_iters: 30,
        tol: 0.0,
        seed: 4,
    };
    let (_, trace) = train_kmeans_traced(&points, &params).unwrap();
    let mut centroids = trace.initial_centroids.clone();
    for step in &trace.steps {
        assert!(!step.repaired);
        let mut inertia = 0.0;
        for (p, &a) in points.iter().zip(&step.assignments) {
            let d: Vec<f64> = centroids.iter().map(|c| sq(p, c)).collect();
            let best = d.iter().cloned().fold(f64::INFINITY, f64::min);
            assert_eq!(d[a], best);
            assert_eq!(d.iter().position(|&x| x == best).unwrap(), a);
            inertia += best;
        }
        assert!((inertia - step.inertia).abs() <= 1e-9 * inertia.max(1.0));
        for (c, centroid) in centroids.iter_mut().enumerate() {
            let members: Vec<&Vec<f64>> = points.iter().zip(&step.assignments).filter(|(_, &a)| a == c).map(|(p, _)| p).collect();
            *centroid = (0..3).map(|j| members.iter().map(|p| p[j]).sum::<f64>() / members.len() as f64).collect();
        }
    }
}

#[test]
fn nearest_code_matches_exhaustive_scan() {
    let mut rng = ChaCha8Rng::seed_from_u64(24);
    let rows: Vec<Vec<f64>> = (0..16).map(|_| (0..6).map(|_| rng.gen_range(-2.0..2.0)).collect()).collect();
    let cb = Codebook::from_f64_rows(&rows).unwrap();
    let stored = cb.rows_f64();
    for _ in 0..5000 {
        let e: Vec<f64> = (0..6).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let d: Vec<f64> = stored.iter().map(|c| sq(&e, c)).collect();
        let best = d.iter().cloned().fold(f64::INFINITY, f64::min);
        let want = d.iter().position(|&x| x == best).unwrap();
        assert_eq!(cb.nearest_code(&e).unwrap(), Sid(want as u32));
    }
    // exact ties resolve to the lowest index
    let tie = Codebook::from_f64_rows(&[vec![1.0, 0.0], vec![-1.0, 0.0]]).unwrap();
    assert_eq!(tie.nearest_code(&[0.0, 5.0]).unwrap(), Sid(0));
}

#[test]
fn separated_blobs_are_recovered() {
    let (points, labels) = checks::gaussian_blobs(25, 8, 5, 100, 0.3);
    let cb = train_kmeans(&points, &KMeansParams::new(8, 1)).unwrap();
    let got: Vec<usize> = points.iter().map(|p| cb.nearest_code(p).unwrap().index()).collect();
    let score = ari(&labels, &got);
    assert!(score > 0.95, "ARI {score}");
}

#[test]
fn training_is_deterministic_per_seed() {
    let (points, _) = checks::gaussian_blobs(26, 5, 4, 50, 1.0);
    let a = train_kmeans(&points, &KMeansParams::new(6, 9)).unwrap();
    let b = train_kmeans(&points, &KMeansParams::new(6, 9)).unwrap();
    assert_eq!(a.to_bytes(), b.to_bytes());
}

proptest! {
    #[test]
    fn codes_are_in_range_and_nearest(points in prop::collection::vec(prop::collection::vec(-10.0f64..10.0, 3), 4..60), k in 1usize..5, seed in 0u64..100) {
        let cb = train_kmeans(&points, &KMeansParams { size: k, max_iters: 20, tol: 1e-9, seed }).unwrap();
        prop_assert_eq!(cb.size(), k);
        let rows = cb.rows_f64();
        for p in &points {
            let s = cb.nearest_code(p).unwrap();
            prop_assert!(s.index() < k);
            let d = sq(p, &rows[s.index()]);
            prop_assert!(rows.iter().all(|r| sq(p, r) >= d));
        }
    }
}
