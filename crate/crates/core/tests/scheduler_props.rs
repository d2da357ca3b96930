mod common;

use proptest::prelude::*;

use continuer_core::candidate::{Action, Candidate, MetricTriple};
use continuer_core::deployment::Placement;
use continuer_core::error::ScheduleError;
use continuer_core::par::Exec;
use continuer_core::scheduler::{
    normalize_min_max, score_candidates, select_technique, sweep, GridSpec, SweepScenario, Thresholds, Weights,
};

use common::{oracle_select, random_candidates, random_thresholds, random_weights, rng};

fn chosen(c: &[Candidate], w: &Weights, t: &Thresholds) -> Option<usize> {
    match select_technique(c, w, t) {
        Ok(d) => Some(d.chosen_index),
        Err(ScheduleError::AllFilteredOut(_)) => None,
        Err(e) => panic!("unexpected error {e}"),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn selector_agrees_with_oracle(seed in any::<u64>()) {
        let mut r = rng(seed);
        let c = random_candidates(&mut r);
        let w = random_weights(&mut r);
        let t = random_thresholds(&mut r);
        prop_assert_eq!(chosen(&c, &w, &t), oracle_select(&c, &w, &t));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1_000))]

    #[test]
    fn affine_maps_leave_choice_unchanged(
        seed in any::<u64>(),
        column in 0usize..3,
        a in 0.01f64..100.0,
        b in -50.0f64..50.0,
    ) {
        let mut r = rng(seed);
        let c = random_candidates(&mut r);
        let w = random_weights(&mut r);
        let mut mapped = c.clone();
        for cand in &mut mapped {
            let m = &mut cand.metrics;
            match column {
                0 => m.accuracy = a * m.accuracy + b,
                1 => m.latency_ms = a * m.latency_ms + b,
                _ => m.downtime_ms = a * m.downtime_ms + b,
            }
        }
        let before = score_candidates(&c, &w).unwrap();
        let after = score_candidates(&mapped, &w).unwrap();
        for (x, y) in before.iter().zip(&after) {
            prop_assert!((x.normalized.accuracy - y.normalized.accuracy).abs() <= 1e-12);
            prop_assert!((x.normalized.latency - y.normalized.latency).abs() <= 1e-12);
            prop_assert!((x.normalized.downtime - y.normalized.downtime).abs() <= 1e-12);
        }
        let t = Thresholds::default();
        let scores: Vec<f64> = before.iter().map(|s| s.score).collect();
        let mut sorted = scores.clone();
        sorted.sort_by(|p, q| q.total_cmp(p));
        // Ties at the top may be broken by rounding in the mapped column.
        let separated = sorted.len() < 2 || sorted[0] - sorted[1] > 1e-9;
        if separated {
            prop_assert_eq!(chosen(&c, &w, &t), chosen(&mapped, &w, &t));
        }
    }

    #[test]
    fn scaling_weights_keeps_argmax(seed in any::<u64>(), k in 0.05f64..1.0) {
        let mut r = rng(seed);
        let c = random_candidates(&mut r);
        let w = random_weights(&mut r);
        let scaled = Weights::new(w.accuracy * k, w.latency * k, w.downtime * k).unwrap();
        let t = Thresholds::default();
        let s: Vec<f64> = score_candidates(&c, &w).unwrap().iter().map(|s| s.score).collect();
        let mut sorted = s.clone();
        sorted.sort_by(|p, q| q.total_cmp(p));
        if sorted.len() < 2 || sorted[0] - sorted[1] > 1e-9 {
            prop_assert_eq!(chosen(&c, &w, &t), chosen(&c, &scaled, &t));
        }
    }

    #[test]
    fn single_weight_picks_the_extreme(seed in any::<u64>()) {
        let mut r = rng(seed);
        let c = random_candidates(&mut r);
        let t = Thresholds::default();
        let i = chosen(&c, &Weights::new(1.0, 0.0, 0.0).unwrap(), &t).unwrap();
        prop_assert!(c.iter().all(|x| x.metrics.accuracy <= c[i].metrics.accuracy));
        let i = chosen(&c, &Weights::new(0.0, 1.0, 0.0).unwrap(), &t).unwrap();
        prop_assert!(c.iter().all(|x| x.metrics.latency_ms >= c[i].metrics.latency_ms));
        let i = chosen(&c, &Weights::new(0.0, 0.0, 1.0).unwrap(), &t).unwrap();
        prop_assert!(c.iter().all(|x| x.metrics.downtime_ms >= c[i].metrics.downtime_ms));
    }

    #[test]
    fn tightening_thresholds_never_enlarges_feasible_set(seed in any::<u64>(), delta in 0.0f64..10.0) {
        let mut r = rng(seed);
        let c = random_candidates(&mut r);
        let loose = random_thresholds(&mut r);
        let tight = Thresholds {
            min_accuracy: Some(loose.min_accuracy.unwrap_or(0.0) + delta / 100.0).map(|v| v.min(1.0)),
            max_latency_ms: Some(loose.max_latency_ms.unwrap_or(50.0) - delta).map(|v| v.max(0.0)),
            max_downtime_ms: loose.max_downtime_ms.map(|v| (v - delta).max(0.0)),
        };
        let feasible = |t: &Thresholds| c.iter().filter(|x| t.violations(&x.metrics).is_empty()).count();
        prop_assert!(feasible(&tight) <= feasible(&loose));
        let kept = |t: &Thresholds| -> Vec<bool> { c.iter().map(|x| t.violations(&x.metrics).is_empty()).collect() };
        for (k_tight, k_loose) in kept(&tight).into_iter().zip(kept(&loose)) {
            prop_assert!(!k_tight || k_loose);
        }
    }

    #[test]
    fn normalized_values_stay_in_unit_interval(values in prop::collection::vec(-1e6f64..1e6, 1..40)) {
        let n = normalize_min_max(&values).unwrap();
        prop_assert!(n.iter().all(|v| (0.0..=1.0).contains(v)));
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if max > min {
            prop_assert!(n.contains(&0.0) && n.contains(&1.0));
        }
    }
}

#[test]
fn all_equal_metrics_choose_repartition() {
    let m = MetricTriple {
        accuracy: 0.8,
        latency_ms: 5.0,
        downtime_ms: 2.0,
    };
    let c: Vec<Candidate> = [
        Action::EarlyExit(2),
        Action::SkipConnection(5),
        Action::Repartition(Placement { assignment: vec![] }),
        Action::EarlyExit(1),
    ]
    .into_iter()
    .map(|action| Candidate { action, metrics: m })
    .collect();
    let w = Weights::new(0.4, 0.4, 0.2).unwrap();
    let t = Thresholds::default();
    assert_eq!(chosen(&c, &w, &t), Some(2));
    assert_eq!(oracle_select(&c, &w, &t), Some(2));
    assert_eq!(chosen(&[c[0].clone(), c[3].clone()], &w, &t), Some(1));
}

#[test]
fn sweep_without_noise_is_perfect_and_exec_independent() {
    let mut r = rng(11);
    let scenarios: Vec<SweepScenario> = (0..6)
        .map(|i| {
            let c = random_candidates(&mut r);
            SweepScenario {
                label: format!("s{i}"),
                estimated: c.clone(),
                measured: c,
            }
        })
        .collect();
    let grid = GridSpec::default();
    let seq = sweep(&scenarios, &grid, &Thresholds::default(), Exec::Sequential).unwrap();
    let par = sweep(&scenarios, &grid, &Thresholds::default(), Exec::Parallel).unwrap();
    assert_eq!(seq, par);
    assert_eq!(seq.weight_settings, 729);
    assert_eq!(seq.instances, 6 * 729);
    assert_eq!(seq.classification_accuracy, 1.0);
    assert_eq!(seq.to_json(), par.to_json());
}

#[test]
fn sweep_accuracy_is_the_agreement_ratio() {
    let mut r = rng(12);
    let scenarios: Vec<SweepScenario> = (0..4)
        .map(|i| SweepScenario {
            label: format!("s{i}"),
            estimated: {
                let mut c = random_candidates(&mut r);
                c.truncate(3);
                c
            },
            measured: Vec::new(),
        })
        .map(|mut s| {
            s.measured = s.estimated.clone();
            s.measured.reverse();
            for c in &mut s.measured {
                c.metrics.latency_ms *= 1.5;
            }
            s
        })
        .collect();
    let grid = GridSpec::default();
    let report = sweep(&scenarios, &grid, &Thresholds::default(), Exec::Parallel).unwrap();
    let weights = grid.weights().unwrap();
    let mut correct = 0;
    let mut total = 0;
    for s in &scenarios {
        for w in &weights {
            let m = oracle_select(&s.measured, w, &Thresholds::default()).unwrap();
            let e = oracle_select(&s.estimated, w, &Thresholds::default()).unwrap();
            total += 1;
            correct += usize::from(s.measured[m].key() == s.estimated[e].key());
        }
    }
    assert_eq!(report.instances, total);
    assert_eq!(report.correct, correct);
    assert_eq!(report.classification_accuracy, correct as f64 / total as f64);
}
