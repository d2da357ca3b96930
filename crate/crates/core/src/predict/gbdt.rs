//! Squared-error gradient boosting over depth-limited regression trees.
//!
//! Split search is exact and greedy: for every feature the node's samples
//! are sorted and every boundary between distinct values is scored by the
//! reduction in squared error. Ties resolve to the lowest feature index and
//! then the lowest threshold, so fitting is fully deterministic. An optional
//! equal-width binning mode restricts candidate thresholds to bin edges.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::PredictError;

/// Ordered feature names shared by every vector of one dataset.
pub type Schema = Arc<[String]>;

pub fn schema<S: AsRef<str>>(names: &[S]) -> Schema {
    names.iter().map(|s| s.as_ref().to_string()).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub schema: Schema,
}

impl FeatureVector {
    pub fn new(values: Vec<f64>, schema: Schema) -> Result<Self, PredictError> {
        if values.len() != schema.len() {
            return Err(PredictError::SchemaMismatch(format!(
                "{} values for {} features",
                values.len(),
                schema.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(PredictError::NonFinite("feature vector".into()));
        }
        Ok(FeatureVector { values, schema })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GbdtParams {
    pub learning_rate: f64,
    pub n_estimators: usize,
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    /// Equal-width bins per feature; `None` means exact split search.
    #[serde(default)]
    pub bins: Option<usize>,
}

impl Default for GbdtParams {
    fn default() -> Self {
        GbdtParams {
            learning_rate: 0.1,
            n_estimators: 100,
            max_depth: 6,
            min_samples_leaf: 1,
            bins: None,
        }
    }
}

impl GbdtParams {
    /// Hyperparameters reported for the boosted latency model.
    pub fn reported() -> Self {
        GbdtParams {
            learning_rate: 0.1,
            n_estimators: 1000,
            max_depth: 10,
            min_samples_leaf: 1,
            bins: Some(256),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TreeNode {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        value: f64,
    },
}

/// Arena-allocated binary tree; node 0 is the root.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    pub nodes: Vec<TreeNode>,
    pub max_depth: usize,
}

impl RegressionTree {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut at = 0;
        loop {
            match self.nodes[at] {
                TreeNode::Leaf { value } => return value,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => at = if x[feature] <= threshold { left } else { right },
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[TreeNode], at: usize) -> usize {
            match nodes[at] {
                TreeNode::Leaf { .. } => 0,
                TreeNode::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }

    /// Root split as `(feature, threshold)`, if the tree is not a single leaf.
    pub fn root_split(&self) -> Option<(usize, f64)> {
        match self.nodes.first()? {
            TreeNode::Split { feature, threshold, .. } => Some((*feature, *threshold)),
            TreeNode::Leaf { .. } => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GbdtModel {
    pub schema: Vec<String>,
    pub base_score: f64,
    pub learning_rate: f64,
    pub n_estimators: usize,
    pub max_depth: usize,
    pub trees: Vec<RegressionTree>,
}

impl GbdtModel {
    pub fn predict(&self, x: &FeatureVector) -> Result<f64, PredictError> {
        if x.schema.len() != self.schema.len() || x.schema.iter().zip(&self.schema).any(|(a, b)| a != b) {
            return Err(PredictError::SchemaMismatch(format!(
                "model expects [{}]",
                self.schema.join(", ")
            )));
        }
        self.predict_values(&x.values)
    }

    /// Prediction from a raw row already known to follow the model schema.
    pub fn predict_values(&self, x: &[f64]) -> Result<f64, PredictError> {
        if x.len() != self.schema.len() {
            return Err(PredictError::SchemaMismatch(format!(
                "{} values for {} features",
                x.len(),
                self.schema.len()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(PredictError::NonFinite("prediction input".into()));
        }
        let sum: f64 = self.trees.iter().map(|t| t.predict(x)).sum();
        Ok(self.base_score + self.learning_rate * sum)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, PredictError> {
        serde_json::from_str(text).map_err(|e| PredictError::SchemaMismatch(e.to_string()))
    }
}

/// Row-major training data after validation.
struct Dataset<'a> {
    rows: Vec<&'a [f64]>,
    n_features: usize,
}

impl Dataset<'_> {
    fn value(&self, row: usize, feature: usize) -> f64 {
        self.rows[row][feature]
    }
}

pub fn gbdt_fit(x: &[FeatureVector], y: &[f64], params: &GbdtParams) -> Result<GbdtModel, PredictError> {
    fit_with_history(x, y, params).map(|(m, _)| m)
}

/// Fits a model and also returns the training MSE after each round
/// (index 0 is the loss of the constant base score).
pub fn fit_with_history(
    x: &[FeatureVector],
    y: &[f64],
    params: &GbdtParams,
) -> Result<(GbdtModel, Vec<f64>), PredictError> {
    let first = x.first().ok_or(PredictError::EmptyDataset)?;
    if y.len() != x.len() {
        return Err(PredictError::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    let schema = first.schema.clone();
    for (i, row) in x.iter().enumerate() {
        if !Arc::ptr_eq(&row.schema, &schema) && row.schema[..] != schema[..] {
            return Err(PredictError::SchemaMismatch(format!("row {i} has a different schema")));
        }
        if row.values.len() != schema.len() {
            return Err(PredictError::SchemaMismatch(format!("row {i} has wrong width")));
        }
        if row.values.iter().any(|v| !v.is_finite()) {
            return Err(PredictError::NonFinite(format!("row {i}")));
        }
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(PredictError::NonFinite("targets".into()));
    }
    if !(params.learning_rate > 0.0 && params.learning_rate <= 1.0) {
        return Err(PredictError::SchemaMismatch(format!(
            "learning rate {} outside (0, 1]",
            params.learning_rate
        )));
    }

    let data = Dataset {
        rows: x.iter().map(|r| r.values.as_slice()).collect(),
        n_features: schema.len(),
    };
    let edges = params.bins.map(|b| bin_edges(&data, b.max(1)));

    let n = y.len();
    let base_score = y.iter().sum::<f64>() / n as f64;
    let mut pred = vec![base_score; n];
    let mse = |pred: &[f64]| y.iter().zip(pred).map(|(t, p)| (t - p).powi(2)).sum::<f64>() / n as f64;
    let mut history = vec![mse(&pred)];

    let mut trees = Vec::with_capacity(params.n_estimators);
    let mut residual = vec![0.0; n];
    for _ in 0..params.n_estimators {
        for i in 0..n {
            residual[i] = y[i] - pred[i];
        }
        let mut idx: Vec<usize> = (0..n).collect();
        let mut builder = TreeBuilder {
            data: &data,
            residual: &residual,
            params,
            edges: edges.as_deref(),
            nodes: Vec::new(),
        };
        builder.grow(&mut idx, 0);
        let tree = RegressionTree {
            nodes: builder.nodes,
            max_depth: params.max_depth,
        };
        for (i, p) in pred.iter_mut().enumerate() {
            *p += params.learning_rate * tree.predict(data.rows[i]);
        }
        history.push(mse(&pred));
        trees.push(tree);
    }

    Ok((
        GbdtModel {
            schema: schema.to_vec(),
            base_score,
            learning_rate: params.learning_rate,
            n_estimators: params.n_estimators,
            max_depth: params.max_depth,
            trees,
        },
        history,
    ))
}

fn bin_edges(data: &Dataset<'_>, bins: usize) -> Vec<Vec<f64>> {
    (0..data.n_features)
        .map(|f| {
            let (lo, hi) = (0..data.rows.len()).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| {
                let v = data.value(r, f);
                (lo.min(v), hi.max(v))
            });
            if hi <= lo {
                return Vec::new();
            }
            let width = (hi - lo) / bins as f64;
            (1..bins).map(|k| lo + k as f64 * width).collect()
        })
        .collect()
}

struct TreeBuilder<'a> {
    data: &'a Dataset<'a>,
    residual: &'a [f64],
    params: &'a GbdtParams,
    edges: Option<&'a [Vec<f64>]>,
    nodes: Vec<TreeNode>,
}

#[derive(Clone, Copy)]
struct SplitChoice {
    feature: usize,
    threshold: f64,
    gain: f64,
}

impl TreeBuilder<'_> {
    fn grow(&mut self, idx: &mut [usize], depth: usize) -> usize {
        let at = self.nodes.len();
        let mean = idx.iter().map(|&i| self.residual[i]).sum::<f64>() / idx.len() as f64;
        self.nodes.push(TreeNode::Leaf { value: mean });
        if depth >= self.params.max_depth || idx.len() < 2 * self.params.min_samples_leaf.max(1) {
            return at;
        }
        let Some(best) = self.best_split(idx) else {
            return at;
        };
        let (feature, threshold) = (best.feature, best.threshold);
        let mid = partition(idx, |i| self.data.value(i, feature) <= threshold);
        let (left_idx, right_idx) = idx.split_at_mut(mid);
        let left = self.grow(left_idx, depth + 1);
        let right = self.grow(right_idx, depth + 1);
        self.nodes[at] = TreeNode::Split {
            feature,
            threshold,
            left,
            right,
        };
        at
    }

    fn best_split(&self, idx: &mut [usize]) -> Option<SplitChoice> {
        let n = idx.len();
        let min_leaf = self.params.min_samples_leaf.max(1);
        let total: f64 = idx.iter().map(|&i| self.residual[i]).sum();
        let parent = total * total / n as f64;
        let mut best: Option<SplitChoice> = None;

        let mut consider = |feature: usize, threshold: f64, n_left: usize, s_left: f64| {
            let n_right = n - n_left;
            if n_left < min_leaf || n_right < min_leaf {
                return;
            }
            let s_right = total - s_left;
            let gain = s_left * s_left / n_left as f64 + s_right * s_right / n_right as f64 - parent;
            if gain > 1e-12 * (1.0 + parent.abs()) && best.is_none_or(|b| gain > b.gain) {
                best = Some(SplitChoice {
                    feature,
                    threshold,
                    gain,
                });
            }
        };

        for f in 0..self.data.n_features {
            idx.sort_by(|&a, &b| self.data.value(a, f).total_cmp(&self.data.value(b, f)));
            match self.edges {
                None => {
                    let mut s_left = 0.0;
                    for k in 0..n - 1 {
                        s_left += self.residual[idx[k]];
                        let lo = self.data.value(idx[k], f);
                        let hi = self.data.value(idx[k + 1], f);
                        if lo < hi {
                            consider(f, midpoint(lo, hi), k + 1, s_left);
                        }
                    }
                }
                Some(edges) => {
                    let mut k = 0;
                    let mut s_left = 0.0;
                    for &edge in &edges[f] {
                        while k < n && self.data.value(idx[k], f) <= edge {
                            s_left += self.residual[idx[k]];
                            k += 1;
                        }
                        if k > 0 && k < n {
                            consider(f, edge, k, s_left);
                        }
                    }
                }
            }
        }
        best
    }
}

/// Threshold strictly below `hi` and at least `lo`.
pub(crate) fn midpoint(lo: f64, hi: f64) -> f64 {
    let m = lo + (hi - lo) / 2.0;
    if m < hi {
        m
    } else {
        lo
    }
}

fn partition(idx: &mut [usize], goes_left: impl Fn(usize) -> bool) -> usize {
    let mut mid = 0;
    for k in 0..idx.len() {
        if goes_left(idx[k]) {
            idx.swap(mid, k);
            mid += 1;
        }
    }
    mid
}
