//! End-to-end pipelines over a model and its profile table: single-failure
//! decisions, estimation-error reports and sweep scenario construction.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::candidate::{
    enumerate_with_costs, Action, BlockCosts, Candidate, DowntimeTable, EnumerateOptions, MetricTriple, Technique,
    DEFAULT_REINSTATE_MS,
};
use crate::deployment::{place_one_block_per_node, Deployment, FailureScenario, NodeId};
use crate::error::{Error, GraphError, PredictError, Result};
use crate::graph::DnnGraph;
use crate::par::Exec;
use crate::predict::latency::fit_latency_predictor;
use crate::predict::{
    load_profiles, percentage_error, AccuracyPredictor, Column, GbdtParams, LatencyPredictor, ProfileTable,
    TableLatency,
};
use crate::scheduler::{select_technique, SweepScenario, Thresholds, Weights};
use crate::topology;

pub const PROFILE_DIR_ENV: &str = "CONTINUER_PROFILE_DIR";

/// Shipped data directory, or `$CONTINUER_PROFILE_DIR` when set.
pub fn profile_dir() -> PathBuf {
    match std::env::var_os(PROFILE_DIR_ENV) {
        Some(dir) if !dir.is_empty() => PathBuf::from(dir),
        _ => PathBuf::from(concat!(env!("CARGO_MANIFEST_DIR"), "/data")),
    }
}

pub fn default_profiles_path(model: &str) -> PathBuf {
    profile_dir().join(format!("{model}.profiles.json"))
}

/// How estimated metrics are produced.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PredictorKind {
    /// Profile lookup of the estimated columns (measured where absent).
    #[default]
    Table,
    /// Per-layer-type boosted trees fitted on the measured latency rows.
    Fitted,
}

impl std::str::FromStr for PredictorKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "table" => Ok(PredictorKind::Table),
            "fitted" => Ok(PredictorKind::Fitted),
            other => Err(format!("unknown predictor `{other}` (expected table or fitted)")),
        }
    }
}

/// A graph plus its profile table on one platform.
#[derive(Clone, Debug)]
pub struct ModelContext {
    pub graph: Arc<DnnGraph>,
    pub profiles: ProfileTable,
    pub platform: String,
    pub downtime: DowntimeTable,
}

impl ModelContext {
    /// `platform` defaults to the first platform listed in the latency rows.
    pub fn new(graph: DnnGraph, profiles: ProfileTable, platform: Option<&str>, reinstate_ms: f64) -> Result<Self> {
        let platforms = profiles.platforms();
        let platform = match platform {
            Some(p) if platforms.iter().any(|q| q == p) => p.to_string(),
            Some(p) => return Err(Error::Config(format!("no latency rows for platform `{p}`"))),
            None => platforms
                .first()
                .cloned()
                .ok_or_else(|| Error::Config("profile table has no latency rows".into()))?,
        };
        let downtime = DowntimeTable::from_profiles(&profiles, &graph.name, reinstate_ms);
        Ok(ModelContext {
            graph: Arc::new(graph),
            profiles,
            platform,
            downtime,
        })
    }

    /// Builtin model name or a manifest path, with its profile file.
    pub fn load(model: &str, profiles_path: &Path, platform: Option<&str>) -> Result<Self> {
        let graph = resolve_model(model)?;
        let profiles = load_profiles(profiles_path)?;
        ModelContext::new(graph, profiles, platform, DEFAULT_REINSTATE_MS)
    }

    /// Observed totals per technique replacing the profile downtime rows.
    pub fn override_downtime(&mut self, totals: &BTreeMap<Technique, f64>) {
        let mut profiles = ProfileTable::default();
        for (&technique, &ms) in totals {
            profiles.downtime.push(crate::predict::profiles::DowntimeRow {
                model: self.graph.name.clone(),
                technique,
                ms,
            });
        }
        let mut table = DowntimeTable::from_profiles(&profiles, &self.graph.name, self.downtime.reinstate_ms);
        for (t, base) in &self.downtime.base_ms {
            if !totals.contains_key(t) {
                table.base_ms.insert(*t, *base);
            }
        }
        self.downtime = table;
    }

    pub fn measured(&self) -> PredictorSet {
        PredictorSet {
            latency: LatencyPredictor::table(TableLatency::from_profiles(
                &self.profiles,
                &self.platform,
                Column::Measured,
            )),
            accuracy: AccuracyPredictor::from_profiles(&self.profiles, Column::Measured),
        }
    }

    pub fn estimated(&self, kind: PredictorKind, params: &GbdtParams, exec: Exec) -> Result<PredictorSet> {
        let latency = match kind {
            PredictorKind::Table => LatencyPredictor::table(TableLatency::from_profiles(
                &self.profiles,
                &self.platform,
                Column::Estimated,
            )),
            PredictorKind::Fitted => {
                fit_latency_predictor(&self.profiles, &self.platform, params, &self.graph.layer_types(), exec)?
            }
        };
        Ok(PredictorSet {
            latency,
            accuracy: AccuracyPredictor::from_profiles(&self.profiles, Column::Estimated),
        })
    }

    /// Table lookup when estimated latency columns exist, fitted otherwise.
    pub fn default_estimation(&self) -> PredictorKind {
        let recorded = self
            .profiles
            .latency
            .iter()
            .any(|r| r.platform == self.platform && r.estimated_ms.is_some());
        if recorded {
            PredictorKind::Table
        } else {
            PredictorKind::Fitted
        }
    }

    pub fn deploy(&self, nodes: Option<usize>) -> Result<Deployment> {
        let count = nodes.unwrap_or_else(|| self.graph.block_count());
        Ok(place_one_block_per_node(self.graph.clone(), count)?)
    }
}

/// Builtin model name or a path to a manifest file.
pub fn resolve_model(model: &str) -> Result<DnnGraph> {
    if let Some(g) = topology::builtin(model) {
        return Ok(g);
    }
    let path = Path::new(model);
    if path.exists() {
        let graph = DnnGraph::load_manifest(path)?;
        let violations = graph.validate();
        if let Some(v) = violations.first() {
            return Err(Error::Config(format!(
                "{}: {} violation(s), first: {v}",
                path.display(),
                violations.len()
            )));
        }
        return Ok(graph);
    }
    Err(GraphError::UnknownModel(model.to_string()).into())
}

#[derive(Debug)]
pub struct PredictorSet {
    pub latency: LatencyPredictor,
    pub accuracy: AccuracyPredictor,
}

impl PredictorSet {
    pub fn costs(&self, graph: &DnnGraph) -> Result<BlockCosts, PredictError> {
        BlockCosts::compute(graph, &self.latency)
    }
}

/// Inputs for one single-failure decision.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub model: String,
    #[serde(default)]
    pub profiles: Option<PathBuf>,
    #[serde(default)]
    pub platform: Option<String>,
    #[serde(default)]
    pub nodes: Option<usize>,
    pub failed_node: u32,
    #[serde(default)]
    pub predictor: PredictorKind,
    pub weights: Weights,
    #[serde(default)]
    pub thresholds: Thresholds,
    #[serde(default)]
    pub options: EnumerateOptions,
    /// Replaces the profile downtime totals per technique.
    #[serde(default)]
    pub downtime_ms: Option<BTreeMap<Technique, f64>>,
    #[serde(default)]
    pub reinstate_ms: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CandidateReport {
    pub label: String,
    pub technique: Technique,
    pub action_id: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub placement: Option<Vec<NodeId>>,
    pub accuracy: f64,
    pub latency_ms: f64,
    pub downtime_ms: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub normalized: Option<[f64; 3]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub violated: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DecisionReport {
    pub model: String,
    pub platform: String,
    pub predictor: PredictorKind,
    pub failed_node: NodeId,
    pub failed_blocks: Vec<usize>,
    pub weights: Weights,
    pub thresholds: Thresholds,
    pub chosen: String,
    pub chosen_technique: Technique,
    pub candidates: Vec<CandidateReport>,
    pub clamped_predictions: u64,
    /// Wall clock of candidate enumeration plus selection.
    pub selection_time_ms: f64,
}

impl DecisionReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn to_table(&self) -> String {
        let width = self.candidates.iter().map(|c| c.label.len()).max().unwrap_or(0).max(9);
        let mut out = String::new();
        let _ = writeln!(
            out,
            "model {} on {} ({} predictor), failed node {} hosting blocks {:?}",
            self.model,
            self.platform,
            match self.predictor {
                PredictorKind::Table => "table",
                PredictorKind::Fitted => "fitted",
            },
            self.failed_node,
            self.failed_blocks
        );
        let _ = writeln!(
            out,
            "{:<width$}  {:>8}  {:>10}  {:>11}  {:>6}  {:>6}  {:>6}  {:>8}",
            "candidate", "accuracy", "latency_ms", "downtime_ms", "A'", "L'", "D'", "score"
        );
        for c in &self.candidates {
            let _ = write!(
                out,
                "{:<width$}  {:>8.4}  {:>10.4}  {:>11.4}",
                c.label, c.accuracy, c.latency_ms, c.downtime_ms
            );
            match (c.normalized, c.score) {
                (Some(n), Some(s)) => {
                    let _ = writeln!(out, "  {:>6.4}  {:>6.4}  {:>6.4}  {:>8.4}", n[0], n[1], n[2], s);
                }
                _ => {
                    let _ = writeln!(out, "  filtered: {}", c.violated.join(", "));
                }
            }
        }
        let _ = writeln!(out, "chosen: {} ({:.3} ms)", self.chosen, self.selection_time_ms);
        out
    }
}

/// Places one block per node, fails `failed_node`, enumerates candidates
/// from `predictors` and selects one.
pub fn decide(ctx: &ModelContext, predictors: &PredictorSet, cfg: &ScenarioConfig) -> Result<DecisionReport> {
    let dep = ctx.deploy(cfg.nodes)?;
    let failure = FailureScenario {
        failed_node: NodeId(cfg.failed_node),
    };
    let costs = predictors.costs(&ctx.graph)?;
    let started = Instant::now();
    let candidates = enumerate_with_costs(
        &dep,
        &failure,
        &costs,
        &predictors.accuracy,
        &ctx.downtime,
        &cfg.options,
    )?;
    let decision = select_technique(&candidates, &cfg.weights, &cfg.thresholds)?;
    let selection_time_ms = started.elapsed().as_secs_f64() * 1e3;

    let reports = candidates
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let eval = decision.evaluations.iter().find(|e| e.index == i);
            let violated = decision
                .rejected
                .iter()
                .find(|(j, _)| *j == i)
                .map(|(_, r)| r.violated.clone())
                .unwrap_or_default();
            CandidateReport {
                label: c.label(),
                technique: c.technique(),
                action_id: c.action.id(),
                placement: match &c.action {
                    Action::Repartition(p) => Some(p.assignment.clone()),
                    _ => None,
                },
                accuracy: c.metrics.accuracy,
                latency_ms: c.metrics.latency_ms,
                downtime_ms: c.metrics.downtime_ms,
                normalized: eval.map(|e| [e.normalized.accuracy, e.normalized.latency, e.normalized.downtime]),
                score: eval.map(|e| e.score),
                violated,
            }
        })
        .collect();

    Ok(DecisionReport {
        model: ctx.graph.name.clone(),
        platform: ctx.platform.clone(),
        predictor: cfg.predictor,
        failed_node: failure.failed_node,
        failed_blocks: dep.blocks_on(failure.failed_node).into_iter().collect(),
        weights: cfg.weights,
        thresholds: cfg.thresholds,
        chosen: decision.chosen.label(),
        chosen_technique: decision.chosen.technique(),
        candidates: reports,
        clamped_predictions: predictors.latency.clamp_count(),
        selection_time_ms,
    })
}

/// Nodes that host at least one block, in node order.
pub fn hosting_nodes(dep: &Deployment) -> Vec<NodeId> {
    dep.nodes
        .iter()
        .copied()
        .filter(|&n| !dep.blocks_on(n).is_empty())
        .collect()
}

/// Measured and estimated candidate lists for every single-node failure.
/// Failed node with its measured and estimated candidate lists.
pub type CandidatePair = (NodeId, Vec<Candidate>, Vec<Candidate>);

pub fn paired_candidates(
    ctx: &ModelContext,
    dep: &Deployment,
    measured: &PredictorSet,
    estimated: &PredictorSet,
    opts: &EnumerateOptions,
) -> Result<Vec<CandidatePair>> {
    let measured_costs = measured.costs(&ctx.graph)?;
    let estimated_costs = estimated.costs(&ctx.graph)?;
    hosting_nodes(dep)
        .into_iter()
        .map(|node| {
            let failure = FailureScenario { failed_node: node };
            let m = enumerate_with_costs(dep, &failure, &measured_costs, &measured.accuracy, &ctx.downtime, opts)?;
            let e = enumerate_with_costs(
                dep,
                &failure,
                &estimated_costs,
                &estimated.accuracy,
                &ctx.downtime,
                opts,
            )?;
            Ok((node, m, e))
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ErrorRow {
    pub model: String,
    pub platform: String,
    pub technique: Technique,
    pub samples: usize,
    pub latency_error_pct: f64,
    pub accuracy_error_pct: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct ErrorReport {
    pub rows: Vec<ErrorRow>,
}

impl ErrorReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<12}  {:<10}  {:<15}  {:>7}  {:>11}  {:>12}",
            "model", "platform", "technique", "samples", "latency_%", "accuracy_%"
        );
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:<12}  {:<10}  {:<15}  {:>7}  {:>11.4}  {:>12.4}",
                r.model,
                r.platform,
                r.technique.to_string(),
                r.samples,
                r.latency_error_pct,
                r.accuracy_error_pct
            );
        }
        out
    }
}

/// Average percentage error of estimated against measured latency and
/// accuracy, per technique, over every single-node failure with all exits
/// offered.
pub fn estimation_errors(ctx: &ModelContext, estimated: &PredictorSet, nodes: Option<usize>) -> Result<Vec<ErrorRow>> {
    let dep = ctx.deploy(nodes)?;
    let measured = ctx.measured();
    let opts = EnumerateOptions {
        exhaustive_exits: true,
        ..EnumerateOptions::default()
    };
    let mut sums: BTreeMap<Technique, (usize, f64, f64)> = BTreeMap::new();
    for (_, m, e) in paired_candidates(ctx, &dep, &measured, estimated, &opts)? {
        for mc in &m {
            let ec = e
                .iter()
                .find(|c| c.key() == mc.key())
                .ok_or_else(|| PredictError::MissingProfile(format!("no estimate for {}", mc.label())))?;
            let lat = percentage_error(mc.metrics.latency_ms, ec.metrics.latency_ms)?;
            let acc = percentage_error(mc.metrics.accuracy, ec.metrics.accuracy)?;
            let entry = sums.entry(mc.technique()).or_default();
            entry.0 += 1;
            entry.1 += lat;
            entry.2 += acc;
        }
    }
    Ok(Technique::ALL
        .iter()
        .filter_map(|t| sums.get(t).map(|s| (*t, s)))
        .map(|(technique, &(n, lat, acc))| ErrorRow {
            model: ctx.graph.name.clone(),
            platform: ctx.platform.clone(),
            technique,
            samples: n,
            latency_error_pct: lat / n as f64,
            accuracy_error_pct: acc / n as f64,
        })
        .collect())
}

/// Multiplicative estimation noise: each latency is scaled by a factor
/// drawn uniformly from `[1 - latency, 1 + latency]`, and likewise for
/// accuracy (clamped to `[0, 1]`).
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub latency: f64,
    pub accuracy: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn is_zero(&self) -> bool {
        self.latency == 0.0 && self.accuracy == 0.0
    }

    fn validate(&self) -> Result<()> {
        for (name, v) in [("latency", self.latency), ("accuracy", self.accuracy)] {
            if !(0.0..1.0).contains(&v) {
                return Err(Error::Config(format!("{name} noise {v} must lie in [0, 1)")));
            }
        }
        Ok(())
    }
}

fn perturb(candidates: &[Candidate], noise: &NoiseSpec, rng: &mut ChaCha8Rng) -> Result<Vec<Candidate>> {
    candidates
        .iter()
        .map(|c| {
            let mut factor = |spread: f64| {
                if spread == 0.0 {
                    1.0
                } else {
                    rng.gen_range(1.0 - spread..=1.0 + spread)
                }
            };
            let lat = c.metrics.latency_ms * factor(noise.latency);
            let acc = (c.metrics.accuracy * factor(noise.accuracy)).clamp(0.0, 1.0);
            Ok(Candidate {
                action: c.action.clone(),
                metrics: MetricTriple::new(acc, lat, c.metrics.downtime_ms)?,
            })
        })
        .collect()
}

/// One sweep scenario per block-hosting node. Noise is applied on top of
/// the estimated candidates, in node order, from a single seeded stream.
pub fn sweep_scenarios(
    ctx: &ModelContext,
    estimated: &PredictorSet,
    nodes: Option<usize>,
    opts: &EnumerateOptions,
    noise: &NoiseSpec,
) -> Result<Vec<SweepScenario>> {
    noise.validate()?;
    let dep = ctx.deploy(nodes)?;
    let measured = ctx.measured();
    let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
    paired_candidates(ctx, &dep, &measured, estimated, opts)?
        .into_iter()
        .map(|(node, m, e)| {
            let estimated = if noise.is_zero() {
                e
            } else {
                perturb(&e, noise, &mut rng)?
            };
            Ok(SweepScenario {
                label: format!("{}/{}", ctx.graph.name, node),
                estimated,
                measured: m,
            })
        })
        .collect()
}

/// Layer types present in `graph` that the profile rows cannot cost.
pub fn uncovered_layer_types(ctx: &ModelContext) -> BTreeSet<crate::graph::LayerType> {
    let pred = ctx.measured().latency;
    ctx.graph
        .layer_types()
        .into_iter()
        .filter(|t| pred.check_covers(&[*t].into()).is_err())
        .collect()
}
