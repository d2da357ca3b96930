//! Per-layer latency prediction, either from a profile lookup table or from
//! one boosted-tree model per layer type.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::PredictError;
use crate::graph::{LayerSpec, LayerType};
use crate::par::Exec;
use crate::predict::gbdt::{gbdt_fit, schema, FeatureVector, GbdtModel, GbdtParams};
use crate::predict::profiles::ProfileTable;

pub fn feature_names(t: LayerType) -> Vec<&'static str> {
    let mut names = vec!["input_h", "input_w", "input_c"];
    if t.has_window() {
        names.extend(["kernel", "stride"]);
    }
    if t.has_filters() {
        names.push("filters");
    }
    if t.has_units() {
        names.push("units");
    }
    names
}

pub fn layer_features(layer: &LayerSpec) -> Vec<f64> {
    let t = layer.layer_type;
    let mut v = vec![
        layer.input_shape.0 as f64,
        layer.input_shape.1 as f64,
        layer.input_channels as f64,
    ];
    if t.has_window() {
        v.push(layer.kernel_size.unwrap_or(1) as f64);
        v.push(layer.stride.unwrap_or(1) as f64);
    }
    if t.has_filters() {
        v.push(layer.filters.unwrap_or(1) as f64);
    }
    if t.has_units() {
        v.push(layer.units.unwrap_or(1) as f64);
    }
    v
}

/// The same input geometry re-expressed as a layer of the fallback family.
fn as_family(layer: &LayerSpec, family: LayerType) -> LayerSpec {
    let (h, w) = layer.input_shape;
    let c = layer.input_channels;
    match family {
        LayerType::GlobalAveragePool => LayerSpec::global_average_pool(h, w, c),
        LayerType::BatchNorm => LayerSpec::batch_norm(h, w, c),
        other => unreachable!("{other} is not a fallback family"),
    }
}

/// Which latency column of a profile table to read.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Column {
    Measured,
    /// `estimated_ms` where present, measured otherwise.
    Estimated,
}

#[derive(Debug, Default)]
pub struct TableLatency {
    exact: HashMap<LayerSpec, f64>,
    by_type: BTreeMap<LayerType, Vec<(Vec<f64>, f64)>>,
}

impl TableLatency {
    pub fn from_profiles(profiles: &ProfileTable, platform: &str, column: Column) -> Self {
        let mut t = TableLatency::default();
        for row in profiles.latency.iter().filter(|r| r.platform == platform) {
            let ms = match column {
                Column::Measured => row.ms,
                Column::Estimated => row.estimated_ms.unwrap_or(row.ms),
            };
            let layer = row.layer();
            t.by_type
                .entry(layer.layer_type)
                .or_default()
                .push((log_features(&layer), ms));
            t.exact.insert(layer, ms);
        }
        t
    }

    pub fn insert(&mut self, layer: LayerSpec, ms: f64) {
        self.by_type
            .entry(layer.layer_type)
            .or_default()
            .push((log_features(&layer), ms));
        self.exact.insert(layer, ms);
    }

    fn lookup(&self, layer: &LayerSpec) -> Result<f64, PredictError> {
        if let Some(&ms) = self.exact.get(layer) {
            return Ok(ms);
        }
        match self.by_type.get(&layer.layer_type) {
            Some(rows) if !rows.is_empty() => {
                let q = log_features(layer);
                let dist = |f: &[f64]| f.iter().zip(&q).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
                let mut best = &rows[0];
                let mut best_d = dist(&best.0);
                for row in &rows[1..] {
                    let d = dist(&row.0);
                    if d < best_d {
                        best = row;
                        best_d = d;
                    }
                }
                Ok(best.1)
            }
            _ => match layer.layer_type.fallback_family() {
                Some(family) => self.lookup(&as_family(layer, family)),
                None => Err(PredictError::MissingLayerFamily(layer.layer_type)),
            },
        }
    }

    fn has(&self, t: LayerType) -> bool {
        self.by_type.contains_key(&t)
    }
}

fn log_features(layer: &LayerSpec) -> Vec<f64> {
    layer_features(layer).into_iter().map(|v| (1.0 + v).ln()).collect()
}

#[derive(Debug, Default)]
pub struct FittedLatency {
    pub models: BTreeMap<LayerType, GbdtModel>,
}

impl FittedLatency {
    fn predict(&self, layer: &LayerSpec) -> Result<f64, PredictError> {
        match self.models.get(&layer.layer_type) {
            Some(m) => m.predict_values(&layer_features(layer)),
            None => match layer.layer_type.fallback_family() {
                Some(family) => self.predict(&as_family(layer, family)),
                None => Err(PredictError::MissingLayerFamily(layer.layer_type)),
            },
        }
    }
}

#[derive(Debug)]
pub enum LatencyMode {
    Table(TableLatency),
    Fitted(FittedLatency),
}

#[derive(Debug)]
pub struct LatencyPredictor {
    pub mode: LatencyMode,
    clamped: AtomicU64,
}

impl LatencyPredictor {
    pub fn table(table: TableLatency) -> Self {
        LatencyPredictor {
            mode: LatencyMode::Table(table),
            clamped: AtomicU64::new(0),
        }
    }

    pub fn fitted(fitted: FittedLatency) -> Self {
        LatencyPredictor {
            mode: LatencyMode::Fitted(fitted),
            clamped: AtomicU64::new(0),
        }
    }

    /// Raw model output for one layer; may be negative in fitted mode.
    pub fn raw_layer_ms(&self, layer: &LayerSpec) -> Result<f64, PredictError> {
        match &self.mode {
            LatencyMode::Table(t) => t.lookup(layer),
            LatencyMode::Fitted(f) => f.predict(layer),
        }
    }

    /// Non-negative layer latency; negative outputs are clamped and counted.
    pub fn layer_ms(&self, layer: &LayerSpec) -> Result<f64, PredictError> {
        let ms = self.raw_layer_ms(layer)?;
        if ms < 0.0 {
            self.clamped.fetch_add(1, Ordering::Relaxed);
            log::debug!("clamped negative latency {ms} for {}", layer.layer_type);
            return Ok(0.0);
        }
        Ok(ms)
    }

    pub fn clamp_count(&self) -> u64 {
        self.clamped.load(Ordering::Relaxed)
    }

    /// Checks that every type can be costed, directly or via its family.
    pub fn check_covers(&self, types: &BTreeSet<LayerType>) -> Result<(), PredictError> {
        let direct = |t: LayerType| match &self.mode {
            LatencyMode::Table(table) => table.has(t),
            LatencyMode::Fitted(f) => f.models.contains_key(&t),
        };
        for &t in types {
            let mut cur = Some(t);
            let mut ok = false;
            while let Some(c) = cur {
                if direct(c) {
                    ok = true;
                    break;
                }
                cur = c.fallback_family();
            }
            if !ok {
                return Err(PredictError::MissingLayerFamily(t));
            }
        }
        Ok(())
    }
}

pub fn predict_graph_latency(pred: &LatencyPredictor, layers: &[LayerSpec]) -> Result<f64, PredictError> {
    layers.iter().map(|l| pred.layer_ms(l)).sum()
}

/// Training data for one layer type on one platform.
pub fn latency_dataset(profiles: &ProfileTable, platform: &str, t: LayerType) -> (Vec<FeatureVector>, Vec<f64>) {
    let s = schema(&feature_names(t));
    profiles
        .latency
        .iter()
        .filter(|r| r.platform == platform && r.layer_type == t)
        .map(|r| {
            let x = FeatureVector {
                values: layer_features(&r.layer()),
                schema: s.clone(),
            };
            (x, r.ms)
        })
        .unzip()
}

/// Fits one model per layer type that has at least two profile rows.
///
/// Every type in `required` must end up covered, either by its own model or
/// by its fallback family; otherwise the first uncovered type is reported.
pub fn fit_latency_predictor(
    profiles: &ProfileTable,
    platform: &str,
    params: &GbdtParams,
    required: &BTreeSet<LayerType>,
    exec: Exec,
) -> Result<LatencyPredictor, PredictError> {
    let datasets: Vec<(LayerType, Vec<FeatureVector>, Vec<f64>)> = LayerType::ALL
        .iter()
        .map(|&t| {
            let (x, y) = latency_dataset(profiles, platform, t);
            (t, x, y)
        })
        .filter(|(_, x, _)| !x.is_empty())
        .collect();

    for &t in required {
        let rows = datasets.iter().find(|d| d.0 == t).map_or(0, |d| d.1.len());
        if rows == 1 {
            return Err(PredictError::InsufficientProfiles(t));
        }
    }

    let fitted = exec.map(&datasets, |(t, x, y)| {
        if x.len() < 2 {
            return Ok(None);
        }
        gbdt_fit(x, y, params).map(|m| Some((*t, m)))
    });
    let mut models = BTreeMap::new();
    for r in fitted {
        if let Some((t, m)) = r? {
            models.insert(t, m);
        }
    }
    let pred = LatencyPredictor::fitted(FittedLatency { models });
    pred.check_covers(required).map_err(|e| match e {
        PredictError::MissingLayerFamily(t) => PredictError::InsufficientProfiles(t),
        other => other,
    })?;
    Ok(pred)
}
