//! `decstack` command-line front end.
//!
//! Machine-readable results (decisions, reports, traces) go to the output
//! stream as JSON; diagnostics go to the error stream. Exit codes:
//!
//! | code | meaning                                  |
//! |------|------------------------------------------|
//! | 0    | success                                  |
//! | 1    | usage error                              |
//! | 2    | data, configuration or storage error     |
//! | 3    | internal invariant violation             |

pub mod config;
pub mod dataset;
pub mod plot;

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context, Result};
use clap::{Args, Parser, Subcommand};
use decstack_core::explain::reproduce;
use decstack_core::trace::Persisted;
use decstack_core::{
    causal_test, extract_engram, Engram, minimal_flip_subset_exhaustive, model_file, AblationMask, DecisionStack,
    EngramStrategy, ExplanationReport, JsonlTraceStore, MemoryTraceStore, NodeId, TraceFilter, TraceStore, Verdict,
};
use serde_json::json;

use crate::config::RunConfig;
use crate::dataset::load_dataset;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_INVARIANT: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "decstack", version, about = "Instrumented decision stack with ablation-replay explanations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit the pool and decision engine described by the config, write the model file
    Train(TrainArgs),
    /// Run one decision, append its trace to the store, print the decision
    Decide(DecideArgs),
    /// Extract the engram of a decision and run the causal ablation test
    Explain(ExplainArgs),
    /// Exhaustive search for the smallest label-flipping ablation
    Oracle(OracleArgs),
    /// Pretty-print a stored trace file or an explanation report
    Inspect(InspectArgs),
}

#[derive(Debug, Args)]
struct Common {
    /// Run configuration (JSON)
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override the configured seed
    #[arg(long)]
    seed: Option<u64>,
    /// Override the configured model file
    #[arg(long)]
    model: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Args)]
struct DecideArgs {
    #[command(flatten)]
    common: Common,
    /// Comma-separated feature values
    #[arg(long, allow_hyphen_values = true)]
    input: String,
    /// Override the configured trace store
    #[arg(long)]
    store: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ExplainArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, allow_hyphen_values = true)]
    input: String,
    /// top_k:<fraction> or abs:<threshold>
    #[arg(long)]
    strategy: Option<String>,
    /// Explicit comma-separated node ids to test instead of extracting an engram
    #[arg(long, conflicts_with = "strategy")]
    engram: Option<String>,
    /// Number of random control ablations
    #[arg(long)]
    controls: Option<usize>,
    #[arg(long)]
    store: Option<PathBuf>,
    /// Override the configured report path
    #[arg(long)]
    report: Option<PathBuf>,
    /// Also write an SVG bar chart of the activations
    #[arg(long)]
    plot: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct OracleArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, allow_hyphen_values = true)]
    input: String,
    /// Comma-separated node ids; defaults to every ablatable node
    #[arg(long)]
    candidates: Option<String>,
    /// Largest subset size to try; defaults to the number of candidates
    #[arg(long)]
    max_size: Option<usize>,
}

#[derive(Debug, Args)]
struct InspectArgs {
    /// Trace store (JSON lines) or report (JSON)
    path: PathBuf,
    /// Only show the trace with this decision id
    #[arg(long)]
    id: Option<String>,
}

#[derive(Debug, thiserror::Error)]
#[error("{0}")]
struct UsageError(String);

/// Runs the CLI with `args` (including the program name) and returns the
/// process exit code.
pub fn run_cli<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = write!(err, "{}", e.render());
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
        }
    };
    let result = match cli.command {
        Command::Train(a) => train(a, out, err),
        Command::Decide(a) => decide(a, out, err),
        Command::Explain(a) => explain(a, out, err),
        Command::Oracle(a) => oracle(a, out, err),
        Command::Inspect(a) => inspect(a, out),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {e:#}");
            exit_code(&e)
        }
    }
}

fn exit_code(e: &anyhow::Error) -> i32 {
    if e.downcast_ref::<UsageError>().is_some() {
        return EXIT_USAGE;
    }
    match e.downcast_ref::<decstack_core::Error>() {
        Some(decstack_core::Error::Invariant(_)) => EXIT_INVARIANT,
        _ => EXIT_DATA,
    }
}

fn load_config(common: &Common) -> Result<RunConfig> {
    let mut config = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    if let Some(model) = &common.model {
        config.paths.model = Some(model.clone());
    }
    Ok(config)
}

fn require<'a>(path: &'a Option<PathBuf>, what: &str, flag: &str) -> Result<&'a Path> {
    path.as_deref()
        .ok_or_else(|| UsageError(format!("no {what} given: set it in the config or pass {flag}")).into())
}

fn parse_input(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .map_err(|_| UsageError(format!("--input: {:?} is not a number", v.trim())).into())
        })
        .collect()
}

fn parse_nodes(list: &str, flag: &str) -> Result<AblationMask> {
    list.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| s.trim().parse::<NodeId>().map_err(|e| anyhow!(UsageError(format!("{flag}: {e}")))))
        .collect()
}

fn load_stack(config: &RunConfig) -> Result<DecisionStack> {
    let path = require(&config.paths.model, "model file", "--model")?;
    let pool = model_file::load(path).with_context(|| format!("loading model {}", path.display()))?;
    Ok(DecisionStack::new(pool)?)
}

fn open_store(path: Option<&Path>) -> Result<Box<dyn TraceStore>> {
    Ok(match path {
        Some(p) => Box::new(JsonlTraceStore::open(p).with_context(|| format!("opening trace store {}", p.display()))?),
        None => Box::new(MemoryTraceStore::new()),
    })
}

fn emit(out: &mut dyn Write, value: &serde_json::Value) -> Result<()> {
    writeln!(out, "{}", serde_json::to_string_pretty(value)?)?;
    Ok(())
}

fn train(args: TrainArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<()> {
    let config = load_config(&args.common)?;
    let dataset_path = require(&config.dataset, "dataset", "\"dataset\" in the config")?;
    let plan = config
        .pool
        .as_ref()
        .ok_or_else(|| UsageError("config has no \"pool\" section to train".into()))?;
    let model_path = require(&config.paths.model, "model file", "--model")?;

    let data = load_dataset(dataset_path).with_context(|| format!("loading {}", dataset_path.display()))?;
    let pool = decstack_core::train::train_pool(&data.features, &data.labels, plan, config.seed)?;
    let stack = DecisionStack::new(pool)?;
    let correct = data
        .features
        .iter()
        .zip(&data.labels)
        .map(|(x, &y)| Ok((stack.replay(x, &AblationMask::empty())?.label == y) as usize))
        .sum::<Result<usize>>()?;
    let accuracy = correct as f64 / data.len() as f64;
    model_file::save(stack.config(), model_path)?;
    writeln!(err, "trained {} models, train accuracy {:.4}", stack.config().models.len(), accuracy)?;
    emit(
        out,
        &json!({
            "model": model_path,
            "config_digest": decstack_core::digest::hex64(stack.config_digest()),
            "seed": config.seed,
            "train_accuracy": accuracy,
            "nodes": stack.registry().len(),
            "ablatable_nodes": stack.registry().ablatable().count(),
        }),
    )
}

fn decide(args: DecideArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<()> {
    let mut config = load_config(&args.common)?;
    if let Some(store) = args.store {
        config.paths.trace_store = Some(store);
    }
    let input = parse_input(&args.input)?;
    let mut stack = load_stack(&config)?;
    if let Some(seed) = args.common.seed {
        let mut pool = stack.config().clone();
        pool.seed = seed;
        stack = DecisionStack::new(pool)?;
    }
    let (decision, trace) = stack.decide(&input, &AblationMask::empty())?;
    let mut store = open_store(config.paths.trace_store.as_deref())?;
    let persisted = store.persist(&trace)?;
    if persisted == Persisted::AlreadyPresent {
        writeln!(err, "trace {} already stored", trace.decision_id)?;
    }
    emit(
        out,
        &json!({
            "decision_id": trace.decision_id,
            "input_digest": decstack_core::digest::hex64(trace.input_digest),
            "seed": trace.seed,
            "decision": decision,
        }),
    )
}

fn explain(args: ExplainArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<()> {
    let mut config = load_config(&args.common)?;
    if let Some(s) = &args.strategy {
        config.strategy = s.parse::<EngramStrategy>().map_err(|e| UsageError(format!("--strategy: {e}")))?;
    }
    if let Some(n) = args.controls {
        config.num_controls = n;
    }
    if let Some(p) = args.store {
        config.paths.trace_store = Some(p);
    }
    if let Some(p) = args.report {
        config.paths.report = Some(p);
    }
    let input = parse_input(&args.input)?;
    let stack = load_stack(&config)?;

    // The engram is read back from the trace store, not from the live run.
    let (_, trace) = stack.decide(&input, &AblationMask::empty())?;
    let mut store = open_store(config.paths.trace_store.as_deref())?;
    store.persist(&trace)?;
    let stored = store
        .load(&TraceFilter::DecisionId(trace.decision_id.clone()))?
        .pop()
        .ok_or_else(|| decstack_core::Error::Invariant(format!("trace {} vanished from the store", trace.decision_id)))?;

    let engram = match &args.engram {
        Some(list) => Engram {
            nodes: parse_nodes(list, "--engram")?,
            strategy: config.strategy,
            decision_id: stored.decision_id.clone(),
        },
        None => extract_engram(&stored, &config.strategy, stack.registry())?,
    };
    let report = causal_test(&stack, &input, &engram, config.num_controls, config.seed)?;
    check_report(&stack, &input, &report)?;

    let body = report.to_json_pretty()? + "\n";
    if let Some(path) = &config.paths.report {
        fs::write(path, &body).with_context(|| format!("writing report {}", path.display()))?;
    }
    if let Some(path) = &args.plot {
        fs::write(path, plot::activation_svg(&stored, stack.registry(), &engram.nodes))
            .with_context(|| format!("writing plot {}", path.display()))?;
    }
    writeln!(
        err,
        "verdict: {} (label {} -> {}), engram of {} nodes, specificity {:.3}",
        serde_json::to_value(report.verdict)?.as_str().unwrap_or_default(),
        report.original.label,
        report.ablated.label,
        engram.nodes.len(),
        report.specificity
    )?;
    emit(
        out,
        &json!({
            "verdict": report.verdict,
            "decision_id": report.decision_id,
            "original_label": report.original.label,
            "ablated_label": report.ablated.label,
            "engram": report.engram.nodes,
            "minimal_subset": report.minimal_subset,
            "control_flip_rate": report.control_flip_rate,
            "specificity": report.specificity,
            "report": config.paths.report,
        }),
    )
}

/// Independent replay of the report's claims before it is written.
fn check_report(stack: &DecisionStack, input: &[f64], report: &ExplanationReport) -> Result<()> {
    let ablated = stack.replay(input, &report.engram.nodes)?;
    let causal = ablated.label != report.original.label;
    if causal != (report.verdict == Verdict::Causal) {
        return Err(decstack_core::Error::Invariant("verdict disagrees with replay".into()).into());
    }
    if reproduce(stack, report)? != *report {
        return Err(decstack_core::Error::Invariant("report is not reproducible from its seeds".into()).into());
    }
    Ok(())
}

fn oracle(args: OracleArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<()> {
    let config = load_config(&args.common)?;
    let input = parse_input(&args.input)?;
    let stack = load_stack(&config)?;
    let candidates: AblationMask = match &args.candidates {
        Some(list) => parse_nodes(list, "--candidates")?,
        None => stack.registry().ablatable().collect(),
    };
    let max_size = args.max_size.unwrap_or(candidates.len());
    let (original, trace) = stack.decide(&input, &AblationMask::empty())?;
    let found = minimal_flip_subset_exhaustive(&stack, &input, &candidates, max_size)?;
    let flipped_label = match &found {
        Some(mask) => Some(stack.replay(&input, mask)?.label),
        None => None,
    };
    match &found {
        Some(m) => writeln!(err, "smallest flipping subset has {} nodes", m.len())?,
        None => writeln!(err, "no subset of at most {max_size} nodes flips the decision")?,
    }
    emit(
        out,
        &json!({
            "decision_id": trace.decision_id,
            "original_label": original.label,
            "candidates": candidates,
            "max_size": max_size,
            "minimal_subset": found,
            "flipped_label": flipped_label,
        }),
    )
}

fn inspect(args: InspectArgs, out: &mut dyn Write) -> Result<()> {
    let body = fs::read_to_string(&args.path).with_context(|| format!("reading {}", args.path.display()))?;
    let as_report = serde_json::from_str::<serde_json::Value>(&body)
        .ok()
        .filter(|v| v.get("report_version").is_some());
    if as_report.is_some() {
        let report = ExplanationReport::from_json(&body)?;
        return emit(out, &serde_json::to_value(report)?);
    }
    let store = JsonlTraceStore::open(&args.path)?;
    let filter = match args.id {
        Some(id) => TraceFilter::DecisionId(id),
        None => TraceFilter::All,
    };
    emit(out, &serde_json::to_value(store.load(&filter)?)?)
}
