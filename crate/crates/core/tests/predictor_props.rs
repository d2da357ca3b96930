mod common;

use proptest::prelude::*;
use rand::Rng;

use continuer_core::graph::LayerSpec;
use continuer_core::predict::features::extract_weight_features;
use continuer_core::predict::gbdt::{fit_with_history, gbdt_fit, GbdtModel, GbdtParams};
use continuer_core::predict::{predict_graph_latency, LatencyPredictor, TableLatency};

use common::{
    brute_force_stump, feature_rows as rows, linear_cost_law_r2, random_dataset, rng, sse_of_split, stats_oracle,
};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(20))]

    #[test]
    fn training_loss_never_increases(seed in any::<u64>(), lr in 0.05f64..=1.0, depth in 1usize..5) {
        let (x, y) = random_dataset(seed, 80, 3);
        let params = GbdtParams { learning_rate: lr, n_estimators: 30, max_depth: depth, ..GbdtParams::default() };
        let (_, history) = fit_with_history(&rows(&x), &y, &params).unwrap();
        prop_assert_eq!(history.len(), 31);
        for pair in history.windows(2) {
            prop_assert!(pair[1] <= pair[0] * (1.0 + 1e-12) + 1e-15, "{} -> {}", pair[0], pair[1]);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn stumps_match_exhaustive_search(seed in any::<u64>(), n in 2usize..=200, features in 1usize..4) {
        let (x, y) = random_dataset(seed, n, features);
        let params = GbdtParams { learning_rate: 1.0, n_estimators: 1, max_depth: 1, min_samples_leaf: 1, bins: None };
        let model = gbdt_fit(&rows(&x), &y, &params).unwrap();
        let mean = y.iter().sum::<f64>() / n as f64;
        let parent: f64 = y.iter().map(|v| (v - mean) * (v - mean)).sum();
        match (model.trees[0].root_split(), brute_force_stump(&x, &y)) {
            (Some((f, t)), Some((best, _, _))) => {
                let achieved = sse_of_split(&x, &y, f, t);
                prop_assert!((achieved - best).abs() <= 1e-9 * (1.0 + best), "{achieved} vs {best}");
                // the threshold separates two distinct observed values
                prop_assert!(x.iter().any(|r| r[f] <= t) && x.iter().any(|r| r[f] > t));
                // leaves hold the partition means
                let (mut l, mut r) = (Vec::new(), Vec::new());
                for (row, v) in x.iter().zip(&y) {
                    if row[f] <= t { l.push(*v) } else { r.push(*v) }
                }
                let lm = l.iter().sum::<f64>() / l.len() as f64;
                let rm = r.iter().sum::<f64>() / r.len() as f64;
                let probe_l = x.iter().find(|row| row[f] <= t).unwrap();
                let probe_r = x.iter().find(|row| row[f] > t).unwrap();
                prop_assert!((model.predict_values(probe_l).unwrap() - lm).abs() < 1e-9);
                prop_assert!((model.predict_values(probe_r).unwrap() - rm).abs() < 1e-9);
            }
            (None, Some((best, _, _))) => prop_assert!(parent - best <= 1e-9 * (1.0 + parent)),
            (None, None) => {}
            (Some(_), None) => prop_assert!(false, "split found where none exists"),
        }
    }

    #[test]
    fn prediction_is_deterministic_and_export_round_trips(seed in any::<u64>()) {
        let (x, y) = random_dataset(seed, 60, 2);
        let data = rows(&x);
        let params = GbdtParams { n_estimators: 20, ..GbdtParams::default() };
        let a = gbdt_fit(&data, &y, &params).unwrap();
        let b = gbdt_fit(&data, &y, &params).unwrap();
        prop_assert_eq!(&a, &b);
        let back = GbdtModel::from_json(&a.to_json()).unwrap();
        for row in &data {
            let p = a.predict(row).unwrap();
            prop_assert_eq!(p.to_bits(), a.predict(row).unwrap().to_bits());
            prop_assert_eq!(p.to_bits(), back.predict(row).unwrap().to_bits());
        }
    }

    #[test]
    fn weight_features_are_permutation_invariant(
        mut weights in prop::collection::vec(-3.0f64..3.0, 1..64),
        seed in any::<u64>(),
    ) {
        let before = extract_weight_features(&[weights.clone()]).unwrap();
        let mut r = rng(seed);
        for i in (1..weights.len()).rev() {
            weights.swap(i, r.gen_range(0..=i));
        }
        let after = extract_weight_features(&[weights.clone()]).unwrap();
        // percentiles depend only on the sorted order; the mean may differ in the last bit
        prop_assert_eq!(&before.values[2..], &after.values[2..]);
        prop_assert!((before.values[0] - after.values[0]).abs() <= 1e-12);
        prop_assert!((before.values[1] - after.values[1]).abs() <= 1e-12);
        let p = &after.values[2..7];
        let min = weights.iter().copied().fold(f64::INFINITY, f64::min);
        let max = weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        prop_assert_eq!(p[0], min);
        prop_assert_eq!(p[4], max);
        prop_assert!(p.windows(2).all(|w| w[0] <= w[1]));
        let oracle = stats_oracle(&weights);
        for (got, want) in after.values.iter().zip(oracle) {
            prop_assert!((got - want).abs() <= 1e-12 * (1.0 + want.abs()));
        }
    }

    #[test]
    fn graph_latency_is_additive(split in 0usize..12, seed in any::<u64>()) {
        let mut r = rng(seed);
        let mut table = TableLatency::default();
        let layers: Vec<LayerSpec> = (0..12)
            .map(|i| {
                let l = LayerSpec::batch_norm(i + 1, i + 1, 8);
                table.insert(l.clone(), r.gen_range(0.0..3.0));
                l
            })
            .collect();
        let pred = LatencyPredictor::table(table);
        let whole = predict_graph_latency(&pred, &layers).unwrap();
        let parts = predict_graph_latency(&pred, &layers[..split]).unwrap()
            + predict_graph_latency(&pred, &layers[split..]).unwrap();
        prop_assert!((whole - parts).abs() <= 1e-12);
        prop_assert_eq!(predict_graph_latency(&pred, &[]).unwrap(), 0.0);
    }
}

#[test]
fn four_values_match_the_statistics_oracle() {
    let v = extract_weight_features(&[vec![1.0, 2.0, 3.0, 4.0]]).unwrap();
    let oracle = stats_oracle(&[1.0, 2.0, 3.0, 4.0]);
    assert_eq!(v.values, oracle.to_vec());
    assert_eq!(v.values, vec![2.5, 1.25, 1.0, 1.75, 2.5, 3.25, 4.0]);
}

#[test]
fn constant_layer_has_zero_variance() {
    let v = extract_weight_features(&[vec![0.7; 9], vec![-2.0]]).unwrap();
    assert_eq!(v.values[1], 0.0);
    assert!(v.values[2..7].iter().all(|&p| p == 0.7));
    assert!(v.values[9..14].iter().all(|&p| p == -2.0));
}

#[test]
fn linear_cost_law_is_learned() {
    let r2 = linear_cost_law_r2();
    assert!(r2 >= 0.99, "held-out r2 {r2}");
}

#[test]
fn binned_search_still_reduces_loss() {
    let (x, y) = random_dataset(5, 150, 3);
    let params = GbdtParams {
        bins: Some(16),
        n_estimators: 40,
        ..GbdtParams::default()
    };
    let (_, history) = fit_with_history(&rows(&x), &y, &params).unwrap();
    assert!(history.last().unwrap() < &(history[0] * 0.5));
}
