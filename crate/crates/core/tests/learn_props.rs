use betti_core::eval::{auc, compute_metrics};
use betti_core::learn::{
    select_features, train_boosted, train_forest, BoostParams, ForestParams, MaxFeatures,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn noisy_data(n: usize, d: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let c = i % 2;
        let row: Vec<f64> = (0..d)
            .map(|j| {
                let shift = if j < 2 { c as f64 * 1.5 } else { 0.0 };
                rng.gen::<f64>() * 2.0 + shift
            })
            .collect();
        x.push(row);
        y.push(c);
    }
    (x, y)
}

fn small_forest(seed: u64) -> ForestParams {
    ForestParams {
        n_estimators: 40,
        seed,
        ..ForestParams::default()
    }
}

fn labels_and_scores() -> impl Strategy<Value = (Vec<usize>, Vec<f64>)> {
    (4usize..40).prop_flat_map(|n| {
        (
            proptest::collection::vec(0usize..2, n),
            proptest::collection::vec(0.0f64..=1.0, n),
        )
            .prop_filter("both classes", |(y, _)| y.contains(&0) && y.contains(&1))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn auc_unchanged_by_monotone_transform((y, s) in labels_and_scores()) {
        let a = auc(&y, &s).unwrap();
        let t: Vec<f64> = s.iter().map(|v| v.powi(3) * 0.5 + 0.1).collect();
        prop_assert_eq!(a, auc(&y, &t).unwrap());
        let flipped: Vec<f64> = s.iter().map(|v| 1.0 - v).collect();
        prop_assert!((auc(&y, &flipped).unwrap() - (1.0 - a)).abs() < 1e-12);
    }

    #[test]
    fn metrics_unchanged_by_permutation((y, s) in labels_and_scores(), seed in any::<u64>()) {
        let pred: Vec<usize> = s.iter().map(|&v| usize::from(v >= 0.5)).collect();
        let base = compute_metrics(&y, &pred, &s).unwrap();
        let mut order: Vec<usize> = (0..y.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for i in (1..order.len()).rev() {
            order.swap(i, rng.gen_range(0..=i));
        }
        let py: Vec<usize> = order.iter().map(|&i| y[i]).collect();
        let pp: Vec<usize> = order.iter().map(|&i| pred[i]).collect();
        let ps: Vec<f64> = order.iter().map(|&i| s[i]).collect();
        prop_assert_eq!(base, compute_metrics(&py, &pp, &ps).unwrap());
    }

    #[test]
    fn selection_is_monotone_and_idempotent(
        imp in proptest::collection::vec(0.0f64..1.0, 1..50),
        a in 0.0f64..0.5,
        b in 0.0f64..0.5,
    ) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let count = |t: f64| select_features(&imp, t).map(|s| s.len()).unwrap_or(0);
        prop_assert!(count(lo) >= count(hi));
        if let Ok(sel) = select_features(&imp, lo) {
            let sub: Vec<f64> = sel.indices.iter().map(|&j| imp[j]).collect();
            let again = select_features(&sub, lo).unwrap();
            prop_assert_eq!(again.indices, (0..sub.len()).collect::<Vec<_>>());
        }
    }
}

#[test]
fn forest_predictions_invariant_to_power_of_two_scaling() {
    let (x, y) = noisy_data(80, 6, 3);
    for k in [-3i32, 1, 4] {
        let f = 2f64.powi(k);
        let xs: Vec<Vec<f64>> = x.iter().map(|r| r.iter().map(|v| v * f).collect()).collect();
        let a = train_forest(&x, &y, &small_forest(9)).unwrap();
        let b = train_forest(&xs, &y, &small_forest(9)).unwrap();
        for (r, rs) in x.iter().zip(&xs) {
            assert_eq!(a.score(r).unwrap(), b.score(rs).unwrap());
        }
    }
}

#[test]
fn boosted_predictions_invariant_to_power_of_two_scaling() {
    let (x, y) = noisy_data(60, 5, 4);
    let params = BoostParams {
        n_estimators: 30,
        max_depth: 4,
        ..BoostParams::default()
    };
    let xs: Vec<Vec<f64>> = x.iter().map(|r| r.iter().map(|v| v * 8.0).collect()).collect();
    let a = train_boosted(&x, &y, &params).unwrap();
    let b = train_boosted(&xs, &y, &params).unwrap();
    for (r, rs) in x.iter().zip(&xs) {
        assert_eq!(a.margin(r).unwrap(), b.margin(rs).unwrap());
    }
}

#[test]
fn duplicated_column_splits_original_importance() {
    let (x, y) = noisy_data(120, 5, 11);
    let xd: Vec<Vec<f64>> = x
        .iter()
        .map(|r| {
            let mut r = r.clone();
            r.push(r[0]);
            r
        })
        .collect();
    let seeds = 0..8u64;
    let n = seeds.clone().count() as f64;
    let (mut single, mut pair) = (0.0, 0.0);
    for s in seeds {
        let params = ForestParams {
            n_estimators: 100,
            max_features: MaxFeatures::All,
            seed: s,
            ..ForestParams::default()
        };
        single += train_forest(&x, &y, &params).unwrap().importance[0] / n;
        let m = train_forest(&xd, &y, &params).unwrap();
        pair += (m.importance[0] + m.importance[5]) / n;
    }
    assert!((single - pair).abs() <= 0.05, "original {single}, pair {pair}");
}

#[test]
fn boosted_training_loss_never_increases() {
    let (x, y) = noisy_data(80, 6, 5);
    for seed in 0..3 {
        let params = BoostParams {
            n_estimators: 40,
            max_depth: 3,
            seed,
            ..BoostParams::default()
        };
        let m = train_boosted(&x, &y, &params).unwrap();
        assert!(m.loss_history.len() >= 2);
        for w in m.loss_history.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "{:?}", m.loss_history);
        }
    }
}
