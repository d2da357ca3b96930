//! `continuer`: recovery-technique decisions, estimation-error reports,
//! weight sweeps and input validation.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

use continuer_core::candidate::{EnumerateOptions, DEFAULT_REINSTATE_MS};
use continuer_core::error::{DeploymentError, Error, ScheduleError};
use continuer_core::graph::DnnGraph;
use continuer_core::par::Exec;
use continuer_core::predict::{load_profiles, GbdtParams, ProfileTable};
use continuer_core::scenario::{
    decide, default_profiles_path, estimation_errors, resolve_model, sweep_scenarios, ErrorReport, ModelContext,
    NoiseSpec, PredictorKind, ScenarioConfig,
};
use continuer_core::scheduler::{sweep, AxisSpec, GridSpec, Thresholds, Weights};
use continuer_core::topology::{MOBILENETV2, RESNET32};

const EXIT_INPUT: u8 = 1;
const EXIT_FILTERED: u8 = 2;

#[derive(Parser)]
#[command(
    name = "continuer",
    version,
    about = "Pick a recovery technique after an edge node fails"
)]
struct Cli {
    /// Log progress to stderr (repeat for more detail).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Choose a technique for one failed node.
    Decide(DecideArgs),
    /// Average percentage error of estimated against measured metrics.
    Errors(ErrorsArgs),
    /// Compare estimated and measured decisions over a weight grid.
    Sweep(SweepArgs),
    /// Check manifests or profile tables.
    Validate(ValidateArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Table,
}

#[derive(Clone, Copy, ValueEnum)]
enum Predictor {
    Table,
    Fitted,
}

impl From<Predictor> for PredictorKind {
    fn from(p: Predictor) -> Self {
        match p {
            Predictor::Table => PredictorKind::Table,
            Predictor::Fitted => PredictorKind::Fitted,
        }
    }
}

#[derive(Args)]
struct Output {
    /// Report format.
    #[arg(long, value_enum, default_value = "table")]
    format: Format,
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Default)]
struct ThresholdArgs {
    #[arg(long)]
    min_accuracy: Option<f64>,
    #[arg(long)]
    max_latency_ms: Option<f64>,
    #[arg(long)]
    max_downtime_ms: Option<f64>,
}

impl ThresholdArgs {
    fn apply(&self, base: Thresholds) -> Thresholds {
        Thresholds {
            min_accuracy: self.min_accuracy.or(base.min_accuracy),
            max_latency_ms: self.max_latency_ms.or(base.max_latency_ms),
            max_downtime_ms: self.max_downtime_ms.or(base.max_downtime_ms),
        }
    }
}

#[derive(Args)]
struct DecideArgs {
    /// Scenario file (JSON); flags given on the command line take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Builtin model (resnet32, mobilenetv2) or a manifest path.
    #[arg(long)]
    model: Option<String>,
    /// Profile table; defaults to `<model>.profiles.json` in the profile directory.
    #[arg(long)]
    profiles: Option<PathBuf>,
    #[arg(long)]
    platform: Option<String>,
    /// Number of edge nodes (default: one per block).
    #[arg(long)]
    nodes: Option<usize>,
    /// 1-based id of the failed node.
    #[arg(long)]
    failed_node: Option<u32>,
    /// Accuracy, latency and downtime weights, e.g. `0.5,0.3,0.2`.
    #[arg(long, value_parser = parse_weights)]
    weights: Option<Weights>,
    #[command(flatten)]
    thresholds: ThresholdArgs,
    #[arg(long, value_enum)]
    predictor: Option<Predictor>,
    /// Per node-boundary transfer cost added to every candidate latency.
    #[arg(long)]
    transfer_ms: Option<f64>,
    /// Offer every exit before the failed node, not just the latest.
    #[arg(long)]
    exhaustive_exits: bool,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct ErrorsArgs {
    /// Models to report (default: both builtins).
    #[arg(long)]
    model: Vec<String>,
    /// Profile table; only valid with a single model.
    #[arg(long)]
    profiles: Option<PathBuf>,
    /// Platforms to report (default: all in the profile table).
    #[arg(long)]
    platform: Vec<String>,
    /// Estimator (default: recorded estimates when present, fitted otherwise).
    #[arg(long, value_enum)]
    predictor: Option<Predictor>,
    #[arg(long)]
    nodes: Option<usize>,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct SweepArgs {
    /// Models to sweep (default: both builtins).
    #[arg(long)]
    model: Vec<String>,
    /// Profile table; only valid with a single model.
    #[arg(long)]
    profiles: Option<PathBuf>,
    #[arg(long)]
    platform: Option<String>,
    #[arg(long)]
    nodes: Option<usize>,
    /// One axis `min:max:step` applied to all three weights.
    #[arg(long, value_parser = parse_axis, conflicts_with = "grid_file")]
    grid: Option<AxisSpec>,
    /// Per-weight grid as JSON `{"accuracy": {...}, "latency": {...}, "downtime": {...}}`.
    #[arg(long)]
    grid_file: Option<PathBuf>,
    #[command(flatten)]
    thresholds: ThresholdArgs,
    #[arg(long, value_enum, default_value = "table")]
    predictor: Predictor,
    /// Relative spread of multiplicative latency noise on estimates.
    #[arg(long, default_value_t = 0.0)]
    latency_noise: f64,
    /// Relative spread of multiplicative accuracy noise on estimates.
    #[arg(long, default_value_t = 0.0)]
    accuracy_noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Run on one thread.
    #[arg(long)]
    sequential: bool,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct ValidateArgs {
    /// Manifest or profile files.
    #[arg(required = true)]
    paths: Vec<PathBuf>,
}

fn parse_weights(s: &str) -> Result<Weights, String> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|_| format!("`{p}` is not a number")))
        .collect::<Result<_, _>>()?;
    let [a, l, d] = parts[..] else {
        return Err(format!("expected three comma-separated weights, got {}", parts.len()));
    };
    Weights::new(a, l, d).map_err(|e| e.to_string())
}

fn parse_axis(s: &str) -> Result<AxisSpec, String> {
    let parts: Vec<f64> = s
        .split(':')
        .map(|p| p.trim().parse::<f64>().map_err(|_| format!("`{p}` is not a number")))
        .collect::<Result<_, _>>()?;
    let [min, max, step] = parts[..] else {
        return Err("expected min:max:step".into());
    };
    let axis = AxisSpec { min, max, step };
    axis.values().map_err(|e| e.to_string())?;
    Ok(axis)
}

fn emit(output: &Output, json: String, table: String) -> anyhow::Result<()> {
    let text = match output.format {
        Format::Json => json,
        Format::Table => table,
    };
    match &output.out {
        Some(path) => {
            std::fs::write(path, format!("{}\n", text.trim_end()))
                .with_context(|| format!("cannot write {}", path.display()))?;
            log::info!("wrote {}", path.display());
        }
        None => println!("{}", text.trim_end()),
    }
    Ok(())
}

fn models_or_default(models: &[String]) -> Vec<String> {
    if models.is_empty() {
        vec![RESNET32.to_string(), MOBILENETV2.to_string()]
    } else {
        models.to_vec()
    }
}

/// Graph plus profile path, defaulting the path by graph name.
fn locate(model: &str, profiles: Option<&Path>) -> anyhow::Result<(DnnGraph, PathBuf)> {
    let graph = resolve_model(model)?;
    let path = profiles.map_or_else(|| default_profiles_path(&graph.name), Path::to_path_buf);
    Ok((graph, path))
}

fn single_profiles<'a>(models: &[String], profiles: Option<&'a Path>) -> anyhow::Result<Option<&'a Path>> {
    if profiles.is_some() && models.len() != 1 {
        bail!("--profiles needs exactly one --model");
    }
    Ok(profiles)
}

fn run_decide(args: DecideArgs) -> anyhow::Result<()> {
    let mut cfg: Option<ScenarioConfig> = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
            Some(serde_json::from_str(&text).map_err(|e| {
                Error::Config(format!(
                    "{} line {} column {}: {e}",
                    path.display(),
                    e.line(),
                    e.column()
                ))
            })?)
        }
        None => None,
    };
    let model = args
        .model
        .or_else(|| cfg.as_ref().map(|c| c.model.clone()))
        .ok_or_else(|| anyhow!("--model or --config is required"))?;
    let failed_node = args
        .failed_node
        .or_else(|| cfg.as_ref().map(|c| c.failed_node))
        .ok_or_else(|| anyhow!("--failed-node or --config is required"))?;
    let weights = args
        .weights
        .or_else(|| cfg.as_ref().map(|c| c.weights))
        .ok_or_else(|| anyhow!("--weights or --config is required"))?;

    let base = cfg.take();
    let profiles = args.profiles.or_else(|| base.as_ref().and_then(|c| c.profiles.clone()));
    let mut options = base.as_ref().map(|c| c.options.clone()).unwrap_or_default();
    if let Some(t) = args.transfer_ms {
        options.transfer_ms = t;
    }
    options.exhaustive_exits |= args.exhaustive_exits;
    let cfg = ScenarioConfig {
        model: model.clone(),
        profiles: profiles.clone(),
        platform: args.platform.or_else(|| base.as_ref().and_then(|c| c.platform.clone())),
        nodes: args.nodes.or_else(|| base.as_ref().and_then(|c| c.nodes)),
        failed_node,
        predictor: args
            .predictor
            .map(PredictorKind::from)
            .or_else(|| base.as_ref().map(|c| c.predictor))
            .unwrap_or_default(),
        weights,
        thresholds: args
            .thresholds
            .apply(base.as_ref().map(|c| c.thresholds).unwrap_or_default()),
        options,
        downtime_ms: base.as_ref().and_then(|c| c.downtime_ms.clone()),
        reinstate_ms: base.as_ref().and_then(|c| c.reinstate_ms),
    };
    cfg.thresholds.validate().map_err(Error::from)?;

    let (graph, path) = locate(&model, cfg.profiles.as_deref())?;
    let table = load_profiles(&path).map_err(Error::from)?;
    let mut ctx = ModelContext::new(
        graph,
        table,
        cfg.platform.as_deref(),
        cfg.reinstate_ms.unwrap_or(DEFAULT_REINSTATE_MS),
    )?;
    if let Some(totals) = &cfg.downtime_ms {
        ctx.override_downtime(totals);
    }
    let predictors = ctx.estimated(cfg.predictor, &GbdtParams::default(), Exec::default())?;
    let report = decide(&ctx, &predictors, &cfg)?;
    emit(&args.output, report.to_json(), report.to_table())
}

fn run_errors(args: ErrorsArgs) -> anyhow::Result<()> {
    let models = models_or_default(&args.model);
    let profiles = single_profiles(&models, args.profiles.as_deref())?;
    let mut report = ErrorReport::default();
    for model in &models {
        let (graph, path) = locate(model, profiles)?;
        let table = load_profiles(&path).map_err(Error::from)?;
        let platforms = if args.platform.is_empty() {
            table.platforms()
        } else {
            args.platform.clone()
        };
        for platform in platforms {
            let ctx = ModelContext::new(graph.clone(), table.clone(), Some(&platform), DEFAULT_REINSTATE_MS)?;
            let kind = args
                .predictor
                .map_or_else(|| ctx.default_estimation(), PredictorKind::from);
            log::info!("{} on {platform}: {kind:?} estimates", ctx.graph.name);
            let est = ctx.estimated(kind, &GbdtParams::default(), Exec::default())?;
            report.rows.extend(estimation_errors(&ctx, &est, args.nodes)?);
        }
    }
    emit(&args.output, report.to_json(), report.to_table())
}

fn run_sweep(args: SweepArgs) -> anyhow::Result<()> {
    let models = models_or_default(&args.model);
    let profiles = single_profiles(&models, args.profiles.as_deref())?;
    let grid = match (&args.grid, &args.grid_file) {
        (Some(axis), _) => GridSpec::uniform(*axis),
        (None, Some(path)) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
            serde_json::from_str(&text).map_err(|e| {
                Error::Config(format!(
                    "{} line {} column {}: {e}",
                    path.display(),
                    e.line(),
                    e.column()
                ))
            })?
        }
        (None, None) => GridSpec::default(),
    };
    let noise = NoiseSpec {
        latency: args.latency_noise,
        accuracy: args.accuracy_noise,
        seed: args.seed,
    };
    let exec = if args.sequential {
        Exec::Sequential
    } else {
        Exec::Parallel
    };
    let mut scenarios = Vec::new();
    for model in &models {
        let (graph, path) = locate(model, profiles)?;
        let ctx = ModelContext::new(
            graph,
            load_profiles(&path).map_err(Error::from)?,
            args.platform.as_deref(),
            DEFAULT_REINSTATE_MS,
        )?;
        let est = ctx.estimated(args.predictor.into(), &GbdtParams::default(), exec)?;
        scenarios.extend(sweep_scenarios(
            &ctx,
            &est,
            args.nodes,
            &EnumerateOptions::default(),
            &noise,
        )?);
    }
    let thresholds = args.thresholds.apply(Thresholds::default());
    let report = sweep(&scenarios, &grid, &thresholds, exec).map_err(Error::from)?;
    emit(&args.output, report.to_json(), report.to_table())
}

/// Prints findings per file; returns whether every file is clean.
fn run_validate(args: ValidateArgs) -> anyhow::Result<bool> {
    let mut clean = true;
    for path in &args.paths {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
        let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| {
            Error::Config(format!(
                "{} line {} column {}: {e}",
                path.display(),
                e.line(),
                e.column()
            ))
        })?;
        let is_manifest = value.get("blocks").is_some();
        if is_manifest {
            let graph = DnnGraph::from_manifest_json(&text).map_err(Error::from)?;
            let violations = graph.validate();
            if violations.is_empty() {
                println!(
                    "{}: ok ({} blocks, {} exits, {} skips)",
                    path.display(),
                    graph.block_count(),
                    graph.exits.len(),
                    graph.skips.len()
                );
            } else {
                clean = false;
                for v in violations {
                    println!("{}: {v}", path.display());
                }
            }
        } else {
            match ProfileTable::from_json(&text) {
                Ok(t) => println!(
                    "{}: ok ({} latency, {} accuracy, {} downtime rows)",
                    path.display(),
                    t.latency.len(),
                    t.accuracy.len(),
                    t.downtime.len()
                ),
                Err(e) => {
                    clean = false;
                    println!("{}: {}", path.display(), Error::from(e));
                }
            }
        }
    }
    Ok(clean)
}

/// Context chain without causes already spelled out by their wrapper.
fn describe(err: &anyhow::Error) -> String {
    let mut parts: Vec<String> = Vec::new();
    for cause in err.chain() {
        let text = cause.to_string();
        if parts.last().is_none_or(|prev| !prev.contains(&text)) {
            parts.push(text);
        }
    }
    parts.join(": ")
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(Error::Schedule(ScheduleError::AllFilteredOut(_)))
        | Some(Error::Deployment(DeploymentError::NoFeasibleTechnique)) => EXIT_FILTERED,
        _ => EXIT_INPUT,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_INPUT)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let result = match cli.command {
        Command::Decide(a) => run_decide(a),
        Command::Errors(a) => run_errors(a),
        Command::Sweep(a) => run_sweep(a),
        Command::Validate(a) => match run_validate(a) {
            Ok(true) => Ok(()),
            Ok(false) => return ExitCode::from(EXIT_INPUT),
            Err(e) => Err(e),
        },
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::from(exit_code(&e))
        }
    }
}
