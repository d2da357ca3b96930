//! Profiler-phase models: boosted regression trees, the per-layer latency
//! predictor, the accuracy predictor and regression-quality metrics.

pub mod accuracy;
pub mod features;
pub mod gbdt;
pub mod latency;
pub mod metrics;
pub mod profiles;

pub use accuracy::{AccuracyKey, AccuracyPredictor};
pub use features::extract_weight_features;
pub use gbdt::{gbdt_fit, FeatureVector, GbdtModel, GbdtParams, RegressionTree};
pub use latency::{fit_latency_predictor, predict_graph_latency, Column, LatencyPredictor, TableLatency};
pub use metrics::{evaluate_regression, percentage_error, RegressionQuality};
pub use profiles::{load_profiles, ProfileTable};
