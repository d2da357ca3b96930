//! Recovery-technique selection for DNN inference pipelined across edge
//! nodes. After one node fails, the candidates are repartitioning the
//! blocks over the survivors, exiting early through a side branch, or
//! rerouting around the lost blocks through a skip connection. Each is
//! priced by accuracy, latency and downtime predictors and ranked by a
//! weighted score over min-max normalized metrics.

pub mod candidate;
pub mod deployment;
pub mod error;
pub mod graph;
pub mod par;
pub mod predict;
pub mod scenario;
pub mod scheduler;
pub mod topology;

pub use candidate::{Action, Candidate, DowntimeTable, EnumerateOptions, MetricTriple, Predictors, Technique};
pub use deployment::{Deployment, FailureScenario, NodeId, Placement};
pub use error::{Error, Result};
pub use graph::{DnnGraph, LayerSpec, LayerType};
pub use par::Exec;
pub use scheduler::{select_technique, sweep, Decision, GridSpec, Thresholds, Weights};
