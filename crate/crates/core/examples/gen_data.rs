//! Regenerates the shipped data files under `data/`.
//!
//! Latency rows come from an analytic per-layer cost law with seeded
//! multiplicative noise, one law per platform. Accuracy and downtime rows
//! are fixed values.
//!
//!     cargo run -p continuer-core --example gen_data

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use continuer_core::graph::{DnnGraph, LayerSpec, LayerType};
use continuer_core::predict::profiles::{AccuracyRow, DowntimeRow, LatencyRow};
use continuer_core::predict::ProfileTable;
use continuer_core::topology::{build_mobilenetv2, build_resnet32};
use continuer_core::Technique;

const SEED: u64 = 0x5eed_2024;
const NOISE: f64 = 0.03;

struct Platform {
    name: &'static str,
    overhead: f64,
    slowdown: f64,
}

const PLATFORMS: [Platform; 2] = [
    Platform {
        name: "platform1",
        overhead: 1.0,
        slowdown: 1.0,
    },
    Platform {
        name: "platform2",
        overhead: 1.3,
        slowdown: 1.55,
    },
];

fn cost_ms(layer: &LayerSpec, p: &Platform) -> f64 {
    let (h, w) = layer.input_shape;
    let elements = f64::from(h) * f64::from(w) * f64::from(layer.input_channels);
    let (oh, ow, _) = layer.output_dims();
    let out_area = f64::from(oh) * f64::from(ow);
    let k = f64::from(layer.kernel_size.unwrap_or(1));
    let (fixed, variable) = match layer.layer_type {
        LayerType::Convolution => {
            let macs = out_area * f64::from(layer.input_channels) * k * k * f64::from(layer.filters.unwrap_or(1));
            (0.12, macs * 2e-7)
        }
        LayerType::DepthwiseConvolution => {
            let macs = out_area * f64::from(layer.input_channels) * k * k;
            (0.10, macs * 6e-7)
        }
        LayerType::BatchNorm | LayerType::ReLU | LayerType::Add | LayerType::Dropout => (0.04, elements * 2e-6),
        LayerType::MaxPool | LayerType::GlobalAveragePool | LayerType::GlobalMaxPool => (0.05, elements * 1.5e-6),
        LayerType::Dense => (0.06, elements * f64::from(layer.units.unwrap_or(1)) * 1e-6),
    };
    fixed * p.overhead + variable * p.slowdown
}

fn grid_layers() -> Vec<LayerSpec> {
    let sizes = [1u32, 2, 4, 8, 16, 32];
    let channels = [3u32, 16, 32, 64, 160, 320];
    let filters = [16u32, 32, 64, 160, 320, 1280];
    let mut out = Vec::new();
    for &h in &sizes {
        for &c in &channels {
            for &k in &[1u32, 3] {
                for &s in &[1u32, 2] {
                    for &f in &filters {
                        out.push(LayerSpec::conv(h, h, c, k, s, f));
                    }
                    out.push(LayerSpec::depthwise(h, h, c, k.max(3), s));
                }
            }
            out.push(LayerSpec::batch_norm(h, h, c));
            out.push(LayerSpec::relu(h, h, c));
            out.push(LayerSpec::add(h, h, c));
            out.push(LayerSpec::dropout(h, h, c));
            out.push(LayerSpec::max_pool(h, h, c, 2, 2));
            out.push(LayerSpec::global_average_pool(h, h, c));
            out.push(LayerSpec::global_max_pool(h, h, c));
        }
    }
    for &features in &[16u32, 64, 256, 1024, 2048, 4096] {
        for &units in &[10u32, 64] {
            out.push(LayerSpec::dense(features, units));
        }
    }
    out
}

fn graph_layers(graph: &DnnGraph) -> Vec<LayerSpec> {
    graph
        .all_layers()
        .chain(graph.exits.iter().flat_map(|e| e.head_layers.iter()))
        .cloned()
        .collect()
}

fn latency_rows(graph: &DnnGraph, rng: &mut ChaCha8Rng) -> Vec<LatencyRow> {
    let mut layers = graph_layers(graph);
    layers.extend(grid_layers());
    let mut rows = Vec::new();
    for p in &PLATFORMS {
        let mut seen = HashSet::new();
        for layer in &layers {
            if !seen.insert(layer.clone()) {
                continue;
            }
            let noisy = cost_ms(layer, p) * rng.gen_range(1.0 - NOISE..=1.0 + NOISE);
            let ms = (noisy * 1e4).round() / 1e4;
            rows.push(LatencyRow::from_layer(p.name, layer, ms));
        }
    }
    rows
}

fn accuracy_rows(model: &str, baseline: f64, exits: &[(u32, f64)], skips: &[(u32, f64)]) -> Vec<AccuracyRow> {
    let row = |technique, action, measured| AccuracyRow {
        model: model.to_string(),
        technique,
        action,
        measured,
        estimated: None,
    };
    let mut out = vec![row(Technique::Repartition, 0, baseline)];
    out.extend(exits.iter().map(|&(id, a)| row(Technique::EarlyExit, id, a)));
    out.extend(skips.iter().map(|&(id, a)| row(Technique::SkipConnection, id, a)));
    out
}

fn downtime_rows(model: &str, repartition: f64, early_exit: f64, skip: f64) -> Vec<DowntimeRow> {
    [
        (Technique::Repartition, repartition),
        (Technique::EarlyExit, early_exit),
        (Technique::SkipConnection, skip),
    ]
    .into_iter()
    .map(|(technique, ms)| DowntimeRow {
        model: model.to_string(),
        technique,
        ms,
    })
    .collect()
}

fn write(path: &Path, text: &str) {
    std::fs::write(path, format!("{text}\n")).unwrap_or_else(|e| panic!("writing {}: {e}", path.display()));
    println!("wrote {}", path.display());
}

fn main() {
    let dir = PathBuf::from(concat!(env!("CARGO_MANIFEST_DIR"), "/data"));
    std::fs::create_dir_all(&dir).expect("data dir");
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);

    let resnet = build_resnet32();
    let resnet_exits: Vec<(u32, f64)> = [
        0.6233, 0.6512, 0.6789, 0.6992, 0.7214, 0.7405, 0.7583, 0.7702, 0.7836, 0.7921, 0.8013, 0.8087, 0.8149,
    ]
    .into_iter()
    .zip(1..)
    .map(|(a, id)| (id, a))
    .collect();
    let resnet_skips = [
        (1, 0.8213),
        (2, 0.8301),
        (3, 0.8265),
        (4, 0.8342),
        (6, 0.8187),
        (7, 0.8376),
        (8, 0.8409),
        (9, 0.8352),
        (11, 0.8431),
        (12, 0.8498),
    ];
    let resnet_profiles = ProfileTable {
        latency: latency_rows(&resnet, &mut rng),
        accuracy: accuracy_rows(&resnet.name, resnet.baseline_accuracy, &resnet_exits, &resnet_skips),
        downtime: downtime_rows(&resnet.name, 3.56, 1.83, 3.32),
    };
    resnet_profiles.validate().expect("valid resnet profiles");

    let mobilenet = build_mobilenetv2();
    let mobilenet_exits: Vec<(u32, f64)> = [
        0.6839, 0.7124, 0.7356, 0.7617, 0.7745, 0.7893, 0.8032, 0.8158, 0.8296, 0.8371,
    ]
    .into_iter()
    .zip(1..)
    .map(|(a, id)| (id, a))
    .collect();
    let mobilenet_skips: Vec<(u32, f64)> = [0.8477, 0.8512, 0.8436, 0.8589, 0.8603, 0.8541, 0.8625, 0.8574, 0.8691]
        .into_iter()
        .zip(0..)
        .map(|(a, id)| (id, a))
        .collect();
    let mobilenet_profiles = ProfileTable {
        latency: latency_rows(&mobilenet, &mut rng),
        accuracy: accuracy_rows(
            &mobilenet.name,
            mobilenet.baseline_accuracy,
            &mobilenet_exits,
            &mobilenet_skips,
        ),
        downtime: downtime_rows(&mobilenet.name, 16.16, 9.28, 16.82),
    };
    mobilenet_profiles.validate().expect("valid mobilenet profiles");

    // Every estimate 10% above its measurement.
    let mut inflated = resnet_profiles.clone();
    for row in &mut inflated.latency {
        row.estimated_ms = Some(row.ms * 1.1);
    }

    write(&dir.join("resnet32.manifest.json"), &resnet.to_manifest_json());
    write(&dir.join("mobilenetv2.manifest.json"), &mobilenet.to_manifest_json());
    write(&dir.join("resnet32.profiles.json"), &resnet_profiles.to_json());
    write(&dir.join("mobilenetv2.profiles.json"), &mobilenet_profiles.to_json());
    write(&dir.join("resnet32.inflated.profiles.json"), &inflated.to_json());
}
