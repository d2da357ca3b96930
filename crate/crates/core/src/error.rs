use serde::Serialize;
use thiserror::Error;

use crate::deployment::NodeId;
use crate::graph::LayerType;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("unknown model `{0}`")]
    UnknownModel(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DeploymentError {
    #[error("{available} nodes cannot host {needed} placement units")]
    InsufficientNodes { needed: usize, available: usize },
    #[error("no surviving nodes to repartition over")]
    NoSurvivors,
    #[error("node {0} is not part of the deployment")]
    UnknownNode(NodeId),
    #[error("node {0} hosts no blocks")]
    NodeHostsNothing(NodeId),
    #[error("unresolved action: {0}")]
    UnresolvedAction(String),
    #[error("no feasible recovery technique")]
    NoFeasibleTechnique,
    #[error(transparent)]
    Predict(#[from] PredictError),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PredictError {
    #[error("layer {0} has no weights")]
    EmptyLayer(usize),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("empty dataset")]
    EmptyDataset,
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("insufficient latency profiles for {0}")]
    InsufficientProfiles(LayerType),
    #[error("no latency model or fallback family for {0}")]
    MissingLayerFamily(LayerType),
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("empty input")]
    EmptyInput,
    #[error("measured value is zero")]
    ZeroMeasured,
    #[error("no accuracy profile for {0}")]
    MissingProfile(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProfileError {
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{section}[{row}].{field} = {value} is out of range")]
    Range {
        section: &'static str,
        row: usize,
        field: &'static str,
        value: f64,
    },
    #[error("duplicate {section} key {key}")]
    DuplicateKey { section: &'static str, key: String },
}

/// One candidate removed by threshold filtering, with the reasons.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Rejection {
    pub candidate: String,
    pub violated: Vec<String>,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScheduleError {
    #[error("no candidates to choose from")]
    EmptyCandidates,
    #[error("empty input")]
    EmptyInput,
    #[error("non-finite metric value")]
    NonFinite,
    #[error("invalid weights: {0}")]
    InvalidWeights(String),
    #[error("invalid threshold: {0}")]
    InvalidThreshold(String),
    #[error("every candidate violates a threshold: {}", describe(.0))]
    AllFilteredOut(Vec<Rejection>),
    #[error("scenario {index}: {message}")]
    Scenario { index: usize, message: String },
}

fn describe(rejections: &[Rejection]) -> String {
    rejections
        .iter()
        .map(|r| format!("{} ({})", r.candidate, r.violated.join(", ")))
        .collect::<Vec<_>>()
        .join("; ")
}

/// Crate-level error with module-qualified messages.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dnn-model: {0}")]
    Graph(#[from] GraphError),
    #[error("deployment: {0}")]
    Deployment(#[from] DeploymentError),
    #[error("predictors: {0}")]
    Predict(#[from] PredictError),
    #[error("profiles: {0}")]
    Profile(#[from] ProfileError),
    #[error("scheduler: {0}")]
    Schedule(#[from] ScheduleError),
    #[error("config: {0}")]
    Config(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
