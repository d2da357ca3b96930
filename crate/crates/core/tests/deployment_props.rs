mod common;

use std::sync::Arc;

use proptest::prelude::*;

use continuer_core::candidate::{enumerate_candidates, Action, DowntimeTable, EnumerateOptions, Predictors};
use continuer_core::deployment::{min_makespan_split, place_one_block_per_node, FailureScenario, NodeId};
use continuer_core::predict::{AccuracyPredictor, Column, LatencyPredictor, TableLatency};
use continuer_core::topology::{build_mobilenetv2, build_resnet32};

use common::compositions;

fn makespan(loads: &[f64], split: &[usize]) -> f64 {
    let mut at = 0;
    let mut worst = 0.0f64;
    for &len in split {
        worst = worst.max(loads[at..at + len].iter().sum::<f64>());
        at += len;
    }
    worst
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn split_matches_brute_force(
        loads in prop::collection::vec(0.0f64..10.0, 1..=9),
        parts_seed in 0usize..100,
    ) {
        let parts = 1 + parts_seed % loads.len();
        let got = min_makespan_split(&loads, parts);
        prop_assert_eq!(got.len(), parts);
        prop_assert_eq!(got.iter().sum::<usize>(), loads.len());
        prop_assert!(got.iter().all(|&n| n > 0));
        let all = compositions(loads.len(), parts);
        let best = all.iter().map(|s| makespan(&loads, s)).fold(f64::INFINITY, f64::min);
        prop_assert!((makespan(&loads, &got) - best).abs() <= 1e-9);
        // lexicographically smallest among the optimal splits
        let smallest = all
            .iter()
            .filter(|s| makespan(&loads, s) <= best + 1e-9)
            .min()
            .unwrap();
        prop_assert_eq!(&got, smallest);
    }

    #[test]
    fn integer_loads_split_exactly(loads in prop::collection::vec(1u8..6, 1..=8), parts_seed in 0usize..50) {
        let loads: Vec<f64> = loads.into_iter().map(f64::from).collect();
        let parts = 1 + parts_seed % loads.len();
        let got = min_makespan_split(&loads, parts);
        let all = compositions(loads.len(), parts);
        let best = all.iter().map(|s| makespan(&loads, s)).fold(f64::INFINITY, f64::min);
        let smallest = all.into_iter().filter(|s| makespan(&loads, s) == best).min().unwrap();
        prop_assert_eq!(got, smallest);
    }
}

fn unit_table(graph: &continuer_core::DnnGraph) -> LatencyPredictor {
    let mut table = TableLatency::default();
    for layer in graph
        .all_layers()
        .chain(graph.exits.iter().flat_map(|e| e.head_layers.iter()))
    {
        table.insert(layer.clone(), 1.0);
    }
    LatencyPredictor::table(table)
}

fn accuracy_for(graph: &continuer_core::DnnGraph) -> AccuracyPredictor {
    let mut p = AccuracyPredictor::from_profiles(&Default::default(), Column::Measured);
    use continuer_core::predict::AccuracyKey;
    use continuer_core::Technique;
    p.table.insert(
        AccuracyKey::new(&graph.name, Technique::Repartition, 0),
        graph.baseline_accuracy,
    );
    for e in &graph.exits {
        p.table
            .insert(AccuracyKey::new(&graph.name, Technique::EarlyExit, e.exit_id), 0.7);
    }
    for s in &graph.skips {
        p.table
            .insert(AccuracyKey::new(&graph.name, Technique::SkipConnection, s.skip_id), 0.8);
    }
    p
}

#[test]
fn every_hosting_node_failure_has_candidates() {
    for graph in [build_resnet32(), build_mobilenetv2()] {
        let latency = unit_table(&graph);
        let accuracy = accuracy_for(&graph);
        let graph = Arc::new(graph);
        let dep = place_one_block_per_node(graph.clone(), graph.block_count()).unwrap();
        let predictors = Predictors {
            latency: &latency,
            accuracy: &accuracy,
        };
        for node in 1..=graph.block_count() as u32 {
            let failure = FailureScenario {
                failed_node: NodeId(node),
            };
            let c = enumerate_candidates(
                &dep,
                &failure,
                predictors,
                &DowntimeTable::default(),
                &EnumerateOptions::default(),
            )
            .unwrap();
            assert!(matches!(c[0].action, Action::Repartition(_)));
            let block = node as usize - 1;
            let has_skip = c.iter().any(|x| matches!(x.action, Action::SkipConnection(_)));
            let skippable = graph.skips.iter().any(|s| s.bypassed_blocks.contains(&block));
            assert_eq!(has_skip, skippable, "{} node {node}", graph.name);
            let exits: Vec<u32> = c
                .iter()
                .filter_map(|x| match x.action {
                    Action::EarlyExit(e) => Some(e),
                    _ => None,
                })
                .collect();
            // only the latest exit before the failure is offered
            assert!(exits.len() <= 1);
            if let Some(&e) = exits.first() {
                let after = graph.exit(e).unwrap().after_block;
                assert!(after < block);
                assert!(graph
                    .exits
                    .iter()
                    .all(|x| x.after_block >= block || x.after_block <= after));
            }
            if let Action::Repartition(p) = &c[0].action {
                assert!(!p.assignment.contains(&NodeId(node)));
                assert_eq!(p.assignment.len(), graph.block_count());
            }
        }
    }
}

#[test]
fn first_node_failure_offers_no_exit() {
    let graph = build_resnet32();
    let latency = unit_table(&graph);
    let accuracy = accuracy_for(&graph);
    let graph = Arc::new(graph);
    let dep = place_one_block_per_node(graph, 15).unwrap();
    let c = enumerate_candidates(
        &dep,
        &FailureScenario { failed_node: NodeId(1) },
        Predictors {
            latency: &latency,
            accuracy: &accuracy,
        },
        &DowntimeTable::default(),
        &EnumerateOptions {
            exhaustive_exits: true,
            ..Default::default()
        },
    )
    .unwrap();
    assert_eq!(c.len(), 1);
}
