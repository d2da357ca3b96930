//! Technique selection: thresholds, normalization, weighted scoring and
//! weight-grid sweeps.

pub mod select;
pub mod sweep;

pub use select::{
    filter_by_thresholds, normalize_min_max, preference, score_candidates, select_technique, Decision, Evaluation,
    Normalized, Scored, Thresholds, Weights,
};
pub use sweep::{sweep, AxisSpec, GridSpec, ScenarioSummary, SweepReport, SweepScenario};
