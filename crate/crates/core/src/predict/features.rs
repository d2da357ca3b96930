//! Per-layer weight statistics used as accuracy-model inputs.

use crate::error::PredictError;
use crate::predict::gbdt::{schema, FeatureVector};

pub const PERCENTILES: [f64; 5] = [0.0, 25.0, 50.0, 75.0, 100.0];
pub const STATS_PER_LAYER: usize = 2 + PERCENTILES.len();

pub fn weight_feature_names(layers: usize) -> Vec<String> {
    (0..layers)
        .flat_map(|l| {
            let mut names = vec![format!("layer{l}_mean"), format!("layer{l}_var")];
            names.extend(PERCENTILES.iter().map(|q| format!("layer{l}_p{q}")));
            names
        })
        .collect()
}

/// Percentile with linear interpolation between closest order statistics.
/// `sorted` must be ascending and non-empty.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q / 100.0 * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    if hi == lo {
        sorted[lo]
    } else {
        sorted[lo] + (sorted[hi] - sorted[lo]) * frac
    }
}

/// Mean, population variance and the five percentiles of each layer,
/// concatenated in layer order.
pub fn extract_weight_features(layers: &[Vec<f64>]) -> Result<FeatureVector, PredictError> {
    let mut values = Vec::with_capacity(layers.len() * STATS_PER_LAYER);
    for (l, weights) in layers.iter().enumerate() {
        if weights.is_empty() {
            return Err(PredictError::EmptyLayer(l));
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(PredictError::NonFinite(format!("layer {l} weights")));
        }
        let mut sorted = weights.clone();
        sorted.sort_by(f64::total_cmp);
        let n = weights.len() as f64;
        let (mean, var) = if sorted[0] == sorted[sorted.len() - 1] {
            // summation rounding would otherwise leave a tiny variance
            (sorted[0], 0.0)
        } else {
            let mean = weights.iter().sum::<f64>() / n;
            (mean, weights.iter().map(|w| (w - mean).powi(2)).sum::<f64>() / n)
        };
        values.push(mean);
        values.push(var);
        values.extend(PERCENTILES.iter().map(|&q| percentile(&sorted, q)));
    }
    FeatureVector::new(values, schema(&weight_feature_names(layers.len())))
}
