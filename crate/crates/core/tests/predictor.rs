use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use wanify::netsim::{generate_dataset, SimConfig};
use wanify::predictor::{
    predict_matrix, train, train_with, warm_retrain, FeatureVector, ForestConfig, RegressionTree, TrainingSample,
    TreeParams,
};
use wanify::topology::Topology;
use wanify::SquareMatrix;

/// Exhaustive CART reference: tries every midpoint on every feature and keeps the first
/// best variance reduction, treating gains within rounding noise as ties.
#[allow(clippy::needless_range_loop)]
fn reference_predict(x: &[Vec<f64>], y: &[f64], rows: &[usize], depth: usize, max_depth: usize, q: &[f64]) -> f64 {
    let mean = rows.iter().map(|&i| y[i]).sum::<f64>() / rows.len() as f64;
    let sse = |r: &[usize]| {
        let m = r.iter().map(|&i| y[i]).sum::<f64>() / r.len() as f64;
        r.iter().map(|&i| (y[i] - m).powi(2)).sum::<f64>()
    };
    if depth >= max_depth || rows.len() < 2 {
        return mean;
    }
    let parent = sse(rows);
    let mut best: Option<(f64, usize, f64)> = None;
    let n_features = x[0].len();
    for f in 0..n_features {
        let mut values: Vec<f64> = rows.iter().map(|&i| x[i][f]).collect();
        values.sort_by(f64::total_cmp);
        values.dedup();
        for w in values.windows(2) {
            let t = w[0] + (w[1] - w[0]) / 2.0;
            let (l, r): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| x[i][f] <= t);
            let gain = parent - sse(&l) - sse(&r);
            let tol = 1e-9 * parent.max(1.0);
            if gain > tol && best.is_none_or(|b| gain > b.0 + tol) {
                best = Some((gain, f, t));
            }
        }
    }
    match best {
        None => mean,
        Some((_, f, t)) => {
            let (l, r): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| x[i][f] <= t);
            let side = if q[f] <= t { l } else { r };
            reference_predict(x, y, &side, depth + 1, max_depth, q)
        }
    }
}

#[test]
fn single_tree_matches_exhaustive_cart() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for trial in 0..20 {
        let x: Vec<Vec<f64>> = (0..10).map(|_| vec![rng.random_range(0.0..10.0), rng.random_range(0.0..10.0)]).collect();
        let y: Vec<f64> = x.iter().map(|r| r[0] * 3.0 - r[1] + rng.random_range(-2.0..2.0)).collect();
        let rows: Vec<usize> = (0..10).collect();
        for max_depth in [1, 2, 3, 12] {
            let params = TreeParams {
                max_depth,
                min_leaf: 1,
                max_features: 2,
            };
            let tree = RegressionTree::fit(&x, &y, &rows, &params, &mut ChaCha8Rng::seed_from_u64(trial));
            for _ in 0..50 {
                let q = [rng.random_range(-1.0..11.0), rng.random_range(-1.0..11.0)];
                let expected = reference_predict(&x, &y, &rows, 0, max_depth, &q);
                let got = tree.predict(&q);
                assert!((got - expected).abs() < 1e-9, "trial {trial} depth {max_depth}: {got} vs {expected}");
            }
        }
    }
}

#[test]
fn forest_without_bootstrap_equals_its_tree() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let samples: Vec<TrainingSample> = (0..30)
        .map(|i| {
            let snap = rng.random_range(50.0..900.0);
            TrainingSample {
                features: FeatureVector {
                    n_dcs: 4,
                    snapshot_bw: snap,
                    mem_util_dst: 0.5,
                    cpu_load_src: 0.3,
                    cpu_load_dst: 0.3,
                    retransmissions: i % 7,
                    distance: rng.random_range(100.0..9000.0),
                },
                target: snap * 0.8,
            }
        })
        .collect();
    let config = ForestConfig {
        bootstrap: false,
        max_features: Some(7),
        min_leaf: 1,
        ..ForestConfig::new(1, 0)
    };
    let model = train_with(&samples, &config).unwrap();
    for s in &samples {
        assert!((model.predict(&s.features).unwrap() - s.target).abs() < 1e-9);
    }
}

fn dataset(n: usize, seed: u64) -> Vec<TrainingSample> {
    generate_dataset(&SimConfig::new(Topology::aws8()), n, &[4, 5, 6, 7, 8], seed)
        .unwrap()
        .into_iter()
        .map(|r| r.row.sample)
        .collect()
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

#[test]
fn snapshot_correlates_with_target() {
    let data = dataset(80, 3);
    let snap: Vec<f64> = data.iter().map(|s| s.features.snapshot_bw).collect();
    let target: Vec<f64> = data.iter().map(|s| s.target).collect();
    let mean = target.iter().sum::<f64>() / target.len() as f64;
    let std = (target.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / target.len() as f64).sqrt();
    assert!(std > 0.0);
    assert!(pearson(&snap, &target) > 0.0);
}

#[test]
fn forest_beats_snapshot_on_held_out_rows() {
    let train_set = dataset(200, 4);
    let test_set = dataset(50, 5);
    let model = train(&train_set, 40, 0).unwrap();
    let forest_mae: f64 = test_set
        .iter()
        .map(|s| (model.predict(&s.features).unwrap() - s.target).abs())
        .sum::<f64>()
        / test_set.len() as f64;
    let snapshot_mae: f64 =
        test_set.iter().map(|s| (s.features.snapshot_bw - s.target).abs()).sum::<f64>() / test_set.len() as f64;
    assert!(forest_mae < snapshot_mae, "forest {forest_mae} vs snapshot {snapshot_mae}");
}

#[test]
fn predictions_stay_within_target_range() {
    let data = dataset(60, 6);
    let model = train(&data, 20, 1).unwrap();
    let lo = data.iter().map(|s| s.target).fold(f64::INFINITY, f64::min);
    let hi = data.iter().map(|s| s.target).fold(f64::NEG_INFINITY, f64::max);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..200 {
        let f = FeatureVector {
            n_dcs: rng.random_range(2..12),
            snapshot_bw: rng.random_range(0.0..5000.0),
            mem_util_dst: rng.random_range(0.0..1.0),
            cpu_load_src: rng.random_range(0.0..1.0),
            cpu_load_dst: rng.random_range(0.0..1.0),
            retransmissions: rng.random_range(0..100),
            distance: rng.random_range(0.0..12000.0),
        };
        let p = model.predict(&f).unwrap();
        assert!(p >= lo - 1e-9 && p <= hi + 1e-9, "{p} outside [{lo}, {hi}]");
    }
}

#[test]
fn same_seed_same_model() {
    let data = dataset(40, 8);
    assert_eq!(train(&data, 10, 3).unwrap(), train(&data, 10, 3).unwrap());
    assert_ne!(train(&data, 10, 3).unwrap().trees, train(&data, 10, 4).unwrap().trees);
}

#[test]
fn warm_retrain_on_same_data_stays_close() {
    let data = dataset(60, 9);
    let model = train(&data, 20, 2).unwrap();
    let (previous, new) = data.split_at(50);
    let refreshed = warm_retrain(&model, previous, new).unwrap();
    assert_eq!(refreshed.generation, model.generation + 1);
    let shift: f64 = data
        .iter()
        .map(|s| (model.predict(&s.features).unwrap() - refreshed.predict(&s.features).unwrap()).abs())
        .sum::<f64>()
        / data.len() as f64;
    assert!(shift < model.training_mae, "shift {shift} vs training MAE {}", model.training_mae);
}

#[test]
fn predicted_matrix_keeps_snapshot_diagonal() {
    let data = dataset(30, 10);
    let model = train(&data, 10, 0).unwrap();
    let grid = SquareMatrix::from_fn(3, |i, j| FeatureVector {
        snapshot_bw: if i == j { 10_000.0 } else { 300.0 },
        ..data[0].features
    });
    let bw = predict_matrix(&model, &grid).unwrap();
    assert_eq!(bw.get(1, 1), 10_000.0);
    assert!(bw.get(0, 1) > 0.0);
}
