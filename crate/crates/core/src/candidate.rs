//! Recovery candidates for a single node failure and the composition of
//! their accuracy, end-to-end latency and downtime.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::deployment::{placement_loads, plan_repartition_loads, Deployment, FailureScenario, Placement};
use crate::error::{DeploymentError, PredictError};
use crate::graph::DnnGraph;
use crate::predict::{predict_graph_latency, AccuracyKey, AccuracyPredictor, LatencyPredictor, ProfileTable};

/// Connections must be re-established after repartitioning or rerouting.
pub const DEFAULT_REINSTATE_MS: f64 = 0.99;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Technique {
    Repartition,
    EarlyExit,
    SkipConnection,
}

impl Technique {
    pub const ALL: [Technique; 3] = [Technique::Repartition, Technique::EarlyExit, Technique::SkipConnection];

    /// Position in the tie-break order (lower wins).
    pub fn tie_rank(self) -> u8 {
        match self {
            Technique::Repartition => 0,
            Technique::SkipConnection => 1,
            Technique::EarlyExit => 2,
        }
    }

    pub fn reinstates_connections(self) -> bool {
        matches!(self, Technique::Repartition | Technique::SkipConnection)
    }
}

impl fmt::Display for Technique {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Technique::Repartition => "Repartition",
            Technique::EarlyExit => "EarlyExit",
            Technique::SkipConnection => "SkipConnection",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub enum Action {
    Repartition(Placement),
    EarlyExit(u32),
    SkipConnection(u32),
}

impl Action {
    pub fn technique(&self) -> Technique {
        match self {
            Action::Repartition(_) => Technique::Repartition,
            Action::EarlyExit(_) => Technique::EarlyExit,
            Action::SkipConnection(_) => Technique::SkipConnection,
        }
    }

    /// Exit or skip id; 0 for repartitioning.
    pub fn id(&self) -> u32 {
        match self {
            Action::Repartition(_) => 0,
            Action::EarlyExit(e) => *e,
            Action::SkipConnection(s) => *s,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricTriple {
    pub accuracy: f64,
    pub latency_ms: f64,
    pub downtime_ms: f64,
}

impl MetricTriple {
    pub fn new(accuracy: f64, latency_ms: f64, downtime_ms: f64) -> Result<Self, PredictError> {
        if !(0.0..=1.0).contains(&accuracy) {
            return Err(PredictError::NonFinite(format!("accuracy {accuracy} outside [0, 1]")));
        }
        if !(latency_ms.is_finite() && latency_ms >= 0.0) {
            return Err(PredictError::NonFinite(format!("latency {latency_ms}")));
        }
        if !(downtime_ms.is_finite() && downtime_ms >= 0.0) {
            return Err(PredictError::NonFinite(format!("downtime {downtime_ms}")));
        }
        Ok(MetricTriple {
            accuracy,
            latency_ms,
            downtime_ms,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Candidate {
    pub action: Action,
    pub metrics: MetricTriple,
}

impl Candidate {
    pub fn technique(&self) -> Technique {
        self.action.technique()
    }

    pub fn key(&self) -> (Technique, u32) {
        (self.technique(), self.action.id())
    }

    pub fn label(&self) -> String {
        match &self.action {
            Action::Repartition(_) => "Repartition".into(),
            Action::EarlyExit(e) => format!("EarlyExit E{e}"),
            Action::SkipConnection(s) => format!("SkipConnection S{s}"),
        }
    }
}

/// Per-technique base downtime plus the reinstatement penalty.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DowntimeTable {
    pub base_ms: BTreeMap<Technique, f64>,
    pub reinstate_ms: f64,
}

impl Default for DowntimeTable {
    fn default() -> Self {
        DowntimeTable {
            base_ms: Technique::ALL.iter().map(|&t| (t, 0.0)).collect(),
            reinstate_ms: DEFAULT_REINSTATE_MS,
        }
    }
}

impl DowntimeTable {
    /// Bases derived from observed totals: the reinstatement share is
    /// removed from repartition and skip rows so that composing with zero
    /// selection time reproduces the observed value.
    pub fn from_profiles(profiles: &ProfileTable, model: &str, reinstate_ms: f64) -> Self {
        let mut table = DowntimeTable {
            reinstate_ms,
            ..DowntimeTable::default()
        };
        for row in profiles.downtime.iter().filter(|r| r.model == model) {
            let penalty = if row.technique.reinstates_connections() {
                reinstate_ms
            } else {
                0.0
            };
            table.base_ms.insert(row.technique, (row.ms - penalty).max(0.0));
        }
        table
    }

    pub fn base(&self, t: Technique) -> f64 {
        self.base_ms.get(&t).copied().unwrap_or(0.0)
    }
}

pub fn compose_downtime(technique: Technique, table: &DowntimeTable, selection_ms: f64) -> f64 {
    let reinstate = if technique.reinstates_connections() {
        table.reinstate_ms
    } else {
        0.0
    };
    table.base(technique) + selection_ms + reinstate
}

/// Predicted latency of each graph segment, computed once per deployment.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockCosts {
    pub stem: f64,
    pub blocks: Vec<f64>,
    pub tail: f64,
    pub exit_heads: HashMap<u32, f64>,
}

impl BlockCosts {
    pub fn compute(graph: &DnnGraph, latency: &LatencyPredictor) -> Result<Self, PredictError> {
        Ok(BlockCosts {
            stem: predict_graph_latency(latency, &graph.head_layers)?,
            blocks: graph
                .blocks
                .iter()
                .map(|b| predict_graph_latency(latency, &b.layers))
                .collect::<Result<_, _>>()?,
            tail: predict_graph_latency(latency, &graph.tail_layers)?,
            exit_heads: graph
                .exits
                .iter()
                .map(|e| Ok((e.exit_id, predict_graph_latency(latency, &e.head_layers)?)))
                .collect::<Result<_, PredictError>>()?,
        })
    }

    pub fn full(&self) -> f64 {
        self.stem + self.blocks.iter().sum::<f64>() + self.tail
    }

    pub fn placement_loads(&self) -> Vec<f64> {
        placement_loads(self.stem, &self.blocks, self.tail)
    }

    /// End-to-end latency of `action` executed against `dep`, with
    /// `transfer_ms` charged per node boundary crossed.
    pub fn latency(&self, dep: &Deployment, action: &Action, transfer_ms: f64) -> Result<f64, DeploymentError> {
        let graph = &dep.graph;
        let n = graph.block_count();
        match action {
            Action::Repartition(placement) => {
                if placement.assignment.len() != n {
                    return Err(DeploymentError::UnresolvedAction(
                        "repartition placement does not cover every block".into(),
                    ));
                }
                Ok(self.full() + transfer_ms * placement.boundaries(0..n) as f64)
            }
            Action::EarlyExit(id) => {
                let exit = graph
                    .exit(*id)
                    .ok_or_else(|| DeploymentError::UnresolvedAction(format!("unknown exit E{id}")))?;
                let prefix: f64 = self.blocks[..=exit.after_block].iter().sum();
                let hops = dep.placement.boundaries(0..=exit.after_block);
                Ok(self.stem + prefix + self.exit_heads[id] + transfer_ms * hops as f64)
            }
            Action::SkipConnection(id) => {
                let skip = graph
                    .skip(*id)
                    .ok_or_else(|| DeploymentError::UnresolvedAction(format!("unknown skip S{id}")))?;
                let bypassed: f64 = skip.bypassed_blocks.iter().map(|&b| self.blocks[b]).sum();
                let hops = dep
                    .placement
                    .boundaries((0..n).filter(|b| !skip.bypassed_blocks.contains(b)));
                Ok(self.full() - bypassed + transfer_ms * hops as f64)
            }
        }
    }
}

pub fn compose_latency(
    dep: &Deployment,
    action: &Action,
    latency: &LatencyPredictor,
    transfer_ms: f64,
) -> Result<f64, DeploymentError> {
    BlockCosts::compute(&dep.graph, latency)?.latency(dep, action, transfer_ms)
}

pub fn compose_accuracy(
    graph: &DnnGraph,
    action: &Action,
    accuracy: &AccuracyPredictor,
) -> Result<f64, DeploymentError> {
    match action {
        Action::Repartition(_) => Ok(graph.baseline_accuracy),
        Action::EarlyExit(id) => {
            graph
                .exit(*id)
                .ok_or_else(|| DeploymentError::UnresolvedAction(format!("unknown exit E{id}")))?;
            Ok(accuracy.predict(&AccuracyKey::new(&graph.name, Technique::EarlyExit, *id))?)
        }
        Action::SkipConnection(id) => {
            graph
                .skip(*id)
                .ok_or_else(|| DeploymentError::UnresolvedAction(format!("unknown skip S{id}")))?;
            Ok(accuracy.predict(&AccuracyKey::new(&graph.name, Technique::SkipConnection, *id))?)
        }
    }
}

#[derive(Clone, Copy)]
pub struct Predictors<'a> {
    pub latency: &'a LatencyPredictor,
    pub accuracy: &'a AccuracyPredictor,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnumerateOptions {
    /// Offer every exit before the failed node, not just the latest one.
    #[serde(default)]
    pub exhaustive_exits: bool,
    #[serde(default)]
    pub transfer_ms: f64,
    /// Estimate retrieval and selection time folded into every downtime.
    #[serde(default)]
    pub selection_ms: f64,
}

impl Default for EnumerateOptions {
    fn default() -> Self {
        EnumerateOptions {
            exhaustive_exits: false,
            transfer_ms: 0.0,
            selection_ms: 0.0,
        }
    }
}

/// Feasible actions for `failure`, without metrics: repartitioning first,
/// then exits, then skips, each in ascending id order.
pub fn feasible_actions(
    dep: &Deployment,
    failure: &FailureScenario,
    loads: &[f64],
    exhaustive_exits: bool,
) -> Result<Vec<Action>, DeploymentError> {
    failure.check(dep)?;
    let graph = &dep.graph;
    let failed = failure.failed_node;
    let failed_blocks = dep.blocks_on(failed);
    let first_failed = *failed_blocks.first().expect("checked non-empty");

    let mut actions = Vec::new();
    let survivors = dep.survivors(failed);
    if !survivors.is_empty() {
        actions.push(Action::Repartition(plan_repartition_loads(loads, &survivors)?));
    }

    let block_alive = |b: usize| {
        dep.placement
            .node_of(b)
            .is_some_and(|n| n != failed && dep.alive.contains(&n))
    };

    let mut exits: Vec<u32> = graph
        .exits
        .iter()
        .filter(|e| e.after_block < first_failed && (0..=e.after_block).all(block_alive))
        .map(|e| e.exit_id)
        .collect();
    exits.sort_unstable();
    if !exhaustive_exits {
        exits = exits.last().copied().into_iter().collect();
    }
    actions.extend(exits.into_iter().map(Action::EarlyExit));

    let mut skips: Vec<u32> = graph
        .skips
        .iter()
        .filter(|s| s.bypassed_blocks == failed_blocks)
        .filter(|s| {
            let n = graph.block_count();
            (0..n).filter(|b| !s.bypassed_blocks.contains(b)).all(block_alive)
        })
        .map(|s| s.skip_id)
        .collect();
    skips.sort_unstable();
    actions.extend(skips.into_iter().map(Action::SkipConnection));

    if actions.is_empty() {
        return Err(DeploymentError::NoFeasibleTechnique);
    }
    Ok(actions)
}

pub fn enumerate_candidates(
    dep: &Deployment,
    failure: &FailureScenario,
    predictors: Predictors<'_>,
    downtime: &DowntimeTable,
    opts: &EnumerateOptions,
) -> Result<Vec<Candidate>, DeploymentError> {
    let costs = BlockCosts::compute(&dep.graph, predictors.latency)?;
    enumerate_with_costs(dep, failure, &costs, predictors.accuracy, downtime, opts)
}

/// Same as [`enumerate_candidates`] with segment costs computed up front.
pub fn enumerate_with_costs(
    dep: &Deployment,
    failure: &FailureScenario,
    costs: &BlockCosts,
    accuracy: &AccuracyPredictor,
    downtime: &DowntimeTable,
    opts: &EnumerateOptions,
) -> Result<Vec<Candidate>, DeploymentError> {
    let actions = feasible_actions(dep, failure, &costs.placement_loads(), opts.exhaustive_exits)?;
    actions
        .into_iter()
        .map(|action| {
            let accuracy = compose_accuracy(&dep.graph, &action, accuracy)?;
            let latency = costs.latency(dep, &action, opts.transfer_ms)?;
            let down = compose_downtime(action.technique(), downtime, opts.selection_ms);
            let metrics = MetricTriple::new(accuracy, latency, down)?;
            Ok(Candidate { action, metrics })
        })
        .collect()
}
