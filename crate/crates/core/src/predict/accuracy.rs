//! Accuracy estimates per recovery action: a profile lookup by default,
//! optionally backed by a boosted-tree model over weight statistics.

use std::collections::HashMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::candidate::Technique;
use crate::error::{PredictError, ProfileError};
use crate::predict::gbdt::{gbdt_fit, schema, FeatureVector, GbdtModel, GbdtParams};
use crate::predict::latency::Column;
use crate::predict::metrics::{evaluate_regression, RegressionQuality};
use crate::predict::profiles::ProfileTable;

pub const TARGET_COLUMN: &str = "test_accuracy";

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct AccuracyKey {
    pub model: String,
    pub technique: Technique,
    pub action: u32,
}

impl AccuracyKey {
    pub fn new(model: &str, technique: Technique, action: u32) -> Self {
        AccuracyKey {
            model: model.to_string(),
            technique,
            action,
        }
    }
}

#[derive(Clone, Debug)]
pub struct FittedAccuracy {
    pub model: GbdtModel,
    /// Weight-statistics features describing each action's network.
    pub inputs: HashMap<AccuracyKey, FeatureVector>,
}

#[derive(Clone, Debug, Default)]
pub struct AccuracyPredictor {
    pub table: HashMap<AccuracyKey, f64>,
    pub fitted: Option<FittedAccuracy>,
}

impl AccuracyPredictor {
    pub fn from_profiles(profiles: &ProfileTable, column: Column) -> Self {
        let table = profiles
            .accuracy
            .iter()
            .map(|r| {
                let v = match column {
                    Column::Measured => r.measured,
                    Column::Estimated => r.estimated.unwrap_or(r.measured),
                };
                (AccuracyKey::new(&r.model, r.technique, r.action), v)
            })
            .collect();
        AccuracyPredictor { table, fitted: None }
    }

    pub fn with_fitted(mut self, fitted: FittedAccuracy) -> Self {
        self.fitted = Some(fitted);
        self
    }

    pub fn predict(&self, key: &AccuracyKey) -> Result<f64, PredictError> {
        if let Some(&v) = self.table.get(key) {
            return Ok(v);
        }
        if let Some(f) = &self.fitted {
            if let Some(x) = f.inputs.get(key) {
                return Ok(f.model.predict(x)?.clamp(0.0, 1.0));
            }
        }
        Err(PredictError::MissingProfile(format!(
            "{}/{}/{}",
            key.model, key.technique, key.action
        )))
    }
}

/// Reads a weight-statistics CSV: every column except `test_accuracy` is a
/// numeric feature, one row per weight snapshot.
pub fn load_weight_dataset(path: &Path) -> Result<(Vec<FeatureVector>, Vec<f64>), ProfileError> {
    let io = |e: csv::Error| ProfileError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    };
    let mut reader = csv::Reader::from_path(path).map_err(io)?;
    let headers = reader.headers().map_err(io)?.clone();
    let target = headers
        .iter()
        .position(|h| h == TARGET_COLUMN)
        .ok_or_else(|| ProfileError::Parse {
            line: 1,
            column: 0,
            message: format!("missing `{TARGET_COLUMN}` column"),
        })?;
    let names: Vec<&str> = headers
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != target)
        .map(|(_, h)| h)
        .collect();
    let s = schema(&names);

    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (row_no, record) in reader.records().enumerate() {
        let record = record.map_err(io)?;
        let line = row_no + 2;
        let mut values = Vec::with_capacity(names.len());
        let mut y = None;
        for (i, field) in record.iter().enumerate() {
            let v: f64 = field.trim().parse().map_err(|_| ProfileError::Parse {
                line,
                column: i + 1,
                message: format!("`{}` is not a number in column `{}`", field, &headers[i]),
            })?;
            if i == target {
                y = Some(v);
            } else {
                values.push(v);
            }
        }
        let y = y.unwrap_or(f64::NAN);
        if !(0.0..=1.0).contains(&y) {
            return Err(ProfileError::Range {
                section: "weights",
                row: row_no,
                field: "test_accuracy",
                value: y,
            });
        }
        let x = FeatureVector::new(values, s.clone()).map_err(|e| ProfileError::Parse {
            line,
            column: 0,
            message: e.to_string(),
        })?;
        xs.push(x);
        ys.push(y);
    }
    Ok((xs, ys))
}

/// Feature rows with their targets.
pub type Dataset = (Vec<FeatureVector>, Vec<f64>);

/// Shuffled train/test split; `train_fraction` of the rows go to training.
pub fn split_dataset(x: &[FeatureVector], y: &[f64], train_fraction: f64, seed: u64) -> (Dataset, Dataset) {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let cut = ((x.len() as f64) * train_fraction).round() as usize;
    let take = |ids: &[usize]| -> (Vec<FeatureVector>, Vec<f64>) { ids.iter().map(|&i| (x[i].clone(), y[i])).unzip() };
    (take(&order[..cut]), take(&order[cut..]))
}

/// Fits on an 80:20 split and reports held-out quality.
pub fn fit_accuracy_model(
    x: &[FeatureVector],
    y: &[f64],
    params: &GbdtParams,
    seed: u64,
) -> Result<(GbdtModel, RegressionQuality), PredictError> {
    let ((x_train, y_train), (x_test, y_test)) = split_dataset(x, y, 0.8, seed);
    let model = gbdt_fit(&x_train, &y_train, params)?;
    if x_test.is_empty() {
        let pred: Vec<f64> = x_train.iter().map(|r| model.predict(r)).collect::<Result<_, _>>()?;
        return Ok((model, evaluate_regression(&y_train, &pred)?));
    }
    let pred: Vec<f64> = x_test.iter().map(|r| model.predict(r)).collect::<Result<_, _>>()?;
    let quality = evaluate_regression(&y_test, &pred)?;
    Ok((model, quality))
}
