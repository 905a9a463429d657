//! Engram extraction and the ablation-replay causal test.
//!
//! An explanation of a decision is produced in three steps:
//!
//! 1. [`extract_engram`] picks the active nodes out of an unablated trace.
//! 2. [`causal_test`] replays the same decision with those nodes ablated.
//!    The engram is causal exactly when the label changes. Random
//!    same-size ablations drawn from the remaining ablatable nodes serve as
//!    controls and measure how specific the engram is.
//! 3. For causal engrams, [`greedy_shrink`] reduces the engram to a
//!    1-minimal flipping subset. [`minimal_flip_subset_exhaustive`] is the
//!    exact (small-scale) counterpart used to check it.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::digest::{hex64, input_digest};
use crate::engine::Decision;
use crate::error::{Error, Result};
use crate::node::{AblationMask, NodeId};
use crate::pool::DecisionStack;
use crate::registry::NodeRegistry;
use crate::rng;
use crate::trace::ActivationTrace;

pub const REPORT_VERSION: u32 = 1;
/// Largest candidate set accepted by the exhaustive search.
pub const EXHAUSTIVE_LIMIT: usize = 20;
pub const DEFAULT_TOP_K_FRACTION: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyKind {
    TopKFraction,
    AbsThreshold,
}

/// How "active" nodes are picked from a trace.
///
/// * `TopKFraction(f)`: within each population (one per pool model, plus the
///   engine feature slots), the `ceil(f * size)` nodes of largest absolute
///   activation. `f` must lie in `(0, 1]`.
/// * `AbsThreshold(t)`: every ablatable node with `|activation| > t`,
///   `t >= 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawStrategy", into = "RawStrategy")]
pub struct EngramStrategy {
    kind: StrategyKind,
    parameter: f64,
}

#[derive(Serialize, Deserialize)]
struct RawStrategy {
    kind: StrategyKind,
    parameter: f64,
}

impl TryFrom<RawStrategy> for EngramStrategy {
    type Error = Error;

    fn try_from(raw: RawStrategy) -> Result<Self> {
        EngramStrategy::new(raw.kind, raw.parameter)
    }
}

impl From<EngramStrategy> for RawStrategy {
    fn from(s: EngramStrategy) -> Self {
        RawStrategy {
            kind: s.kind,
            parameter: s.parameter,
        }
    }
}

impl EngramStrategy {
    pub fn new(kind: StrategyKind, parameter: f64) -> Result<Self> {
        let ok = match kind {
            StrategyKind::TopKFraction => parameter > 0.0 && parameter <= 1.0,
            StrategyKind::AbsThreshold => parameter >= 0.0 && parameter.is_finite(),
        };
        if !ok {
            return Err(Error::Argument(match kind {
                StrategyKind::TopKFraction => format!("top-k fraction must be in (0, 1], got {parameter}"),
                StrategyKind::AbsThreshold => format!("threshold must be finite and >= 0, got {parameter}"),
            }));
        }
        Ok(EngramStrategy { kind, parameter })
    }

    pub fn top_k_fraction(fraction: f64) -> Result<Self> {
        Self::new(StrategyKind::TopKFraction, fraction)
    }

    pub fn abs_threshold(threshold: f64) -> Result<Self> {
        Self::new(StrategyKind::AbsThreshold, threshold)
    }

    pub fn kind(&self) -> StrategyKind {
        self.kind
    }

    pub fn parameter(&self) -> f64 {
        self.parameter
    }
}

impl Default for EngramStrategy {
    fn default() -> Self {
        EngramStrategy {
            kind: StrategyKind::TopKFraction,
            parameter: DEFAULT_TOP_K_FRACTION,
        }
    }
}

impl fmt::Display for EngramStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            StrategyKind::TopKFraction => write!(f, "top_k:{}", self.parameter),
            StrategyKind::AbsThreshold => write!(f, "abs:{}", self.parameter),
        }
    }
}

/// Parses `top_k:<fraction>` or `abs:<threshold>`.
impl FromStr for EngramStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Argument(format!("strategy {s:?} is not top_k:<fraction> or abs:<threshold>"));
        let (kind, value) = s.split_once(':').ok_or_else(bad)?;
        let value: f64 = value.trim().parse().map_err(|_| bad())?;
        match kind.trim() {
            "top_k" => Self::top_k_fraction(value),
            "abs" => Self::abs_threshold(value),
            _ => Err(bad()),
        }
    }
}

/// The active ablatable nodes of one decision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Engram {
    pub nodes: AblationMask,
    pub strategy: EngramStrategy,
    pub decision_id: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Verdict {
    Causal,
    NonCausal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlAblation {
    pub mask: AblationMask,
    pub label: usize,
    pub flipped: bool,
}

/// Outcome of the causal test for one decision.
///
/// `control_flip_rate` is 0 when no controls ran (none requested, empty
/// engram, or `controls_skipped` because the ablatable complement is smaller
/// than the engram).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplanationReport {
    pub report_version: u32,
    pub decision_id: String,
    pub config_digest: String,
    pub input_digest: String,
    pub input: Vec<f64>,
    pub pool_seed: u64,
    pub control_seed: u64,
    pub engram: Engram,
    pub original: Decision,
    pub ablated: Decision,
    pub margin_delta: f64,
    pub verdict: Verdict,
    pub controls_requested: usize,
    pub controls_skipped: bool,
    pub controls: Vec<ControlAblation>,
    pub control_flip_rate: f64,
    pub specificity: f64,
    pub minimal_subset: Option<AblationMask>,
}

impl ExplanationReport {
    pub fn to_json_pretty(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let report: ExplanationReport = serde_json::from_str(s)?;
        if report.report_version != REPORT_VERSION {
            return Err(Error::Data(format!(
                "unsupported report_version {} (expected {REPORT_VERSION})",
                report.report_version
            )));
        }
        Ok(report)
    }
}

/// Picks the engram from an unablated trace.
pub fn extract_engram(trace: &ActivationTrace, strategy: &EngramStrategy, registry: &NodeRegistry) -> Result<Engram> {
    if !trace.mask_applied.is_empty() {
        return Err(Error::Precondition(format!(
            "trace {} was recorded under a mask of {} nodes; only unablated decisions can be explained",
            trace.decision_id,
            trace.mask_applied.len()
        )));
    }
    let magnitude = |id: &NodeId| -> Result<f64> {
        trace.activation(id).map(f64::abs).ok_or_else(|| {
            Error::Precondition(format!("trace {} has no record for node {id}", trace.decision_id))
        })
    };

    let mut nodes = AblationMask::empty();
    match strategy.kind {
        StrategyKind::TopKFraction => {
            for population in registry.populations() {
                let mut ranked = population
                    .iter()
                    .map(|id| Ok((*id, magnitude(id)?)))
                    .collect::<Result<Vec<_>>>()?;
                // stable: equal magnitudes keep canonical order
                ranked.sort_by(|a, b| b.1.total_cmp(&a.1));
                let take = top_k_count(strategy.parameter, ranked.len());
                nodes.extend(ranked.into_iter().take(take).map(|(id, _)| id));
            }
        }
        StrategyKind::AbsThreshold => {
            for id in registry.ablatable() {
                if magnitude(&id)? > strategy.parameter {
                    nodes.insert(id);
                }
            }
        }
    }
    Ok(Engram {
        nodes,
        strategy: *strategy,
        decision_id: trace.decision_id.clone(),
    })
}

/// `ceil(fraction * size)`, treating products within 1e-9 of an integer as
/// that integer so that e.g. `0.1 * 30` selects 3 nodes.
fn top_k_count(fraction: f64, size: usize) -> usize {
    if size == 0 {
        return 0;
    }
    let raw = fraction * size as f64;
    let count = (raw - 1e-9).ceil().max(1.0) as usize;
    count.min(size)
}

fn check_ablatable(stack: &DecisionStack, nodes: &AblationMask) -> Result<()> {
    for id in nodes {
        if !stack.registry().is_ablatable(id) {
            return Err(Error::Mask(format!("engram node {id} is not a registered ablatable node")));
        }
    }
    Ok(())
}

/// Replays the decision with the engram ablated, runs `num_controls` random
/// same-size control ablations, and shrinks causal engrams to a 1-minimal
/// subset.
pub fn causal_test(
    stack: &DecisionStack,
    input: &[f64],
    engram: &Engram,
    num_controls: usize,
    seed: u64,
) -> Result<ExplanationReport> {
    check_ablatable(stack, &engram.nodes)?;
    let (original, trace) = stack.decide(input, &AblationMask::empty())?;
    let ablated = stack.replay(input, &engram.nodes)?;
    let verdict = if ablated.label != original.label {
        Verdict::Causal
    } else {
        Verdict::NonCausal
    };

    let size = engram.nodes.len();
    let complement: Vec<NodeId> = stack
        .registry()
        .ablatable()
        .filter(|id| !engram.nodes.contains(id))
        .collect();
    let controls_skipped = size > 0 && num_controls > 0 && complement.len() < size;
    let masks: Vec<AblationMask> = if size == 0 || controls_skipped {
        Vec::new()
    } else {
        let mut rng = rng::seeded(seed, rng::CONTROL_STREAM);
        (0..num_controls)
            .map(|_| {
                rng::sample_distinct(&mut rng, complement.len(), size)
                    .into_iter()
                    .map(|i| complement[i])
                    .collect()
            })
            .collect()
    };
    // Replays are independent; collect() keeps draw order.
    let controls: Vec<ControlAblation> = masks
        .into_par_iter()
        .map(|mask| {
            let label = stack.replay(input, &mask)?.label;
            Ok(ControlAblation {
                mask,
                label,
                flipped: label != original.label,
            })
        })
        .collect::<Result<_>>()?;
    let control_flip_rate = if controls.is_empty() {
        0.0
    } else {
        controls.iter().filter(|c| c.flipped).count() as f64 / controls.len() as f64
    };

    let minimal_subset = match verdict {
        Verdict::Causal => Some(greedy_shrink(stack, input, engram)?.nodes),
        Verdict::NonCausal => None,
    };

    Ok(ExplanationReport {
        report_version: REPORT_VERSION,
        decision_id: trace.decision_id,
        config_digest: hex64(stack.config_digest()),
        input_digest: hex64(input_digest(input)?),
        input: input.to_vec(),
        pool_seed: stack.config().seed,
        control_seed: seed,
        engram: engram.clone(),
        margin_delta: ablated.margin - original.margin,
        original,
        ablated,
        verdict,
        controls_requested: num_controls,
        controls_skipped,
        controls,
        control_flip_rate,
        specificity: 1.0 - control_flip_rate,
        minimal_subset,
    })
}

/// Re-runs [`causal_test`] from the seeds and inputs recorded in `report`.
pub fn reproduce(stack: &DecisionStack, report: &ExplanationReport) -> Result<ExplanationReport> {
    causal_test(
        stack,
        &report.input,
        &report.engram,
        report.controls_requested,
        report.control_seed,
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShrinkOutcome {
    pub nodes: AblationMask,
    /// Whether `nodes` flips the label. `false` means the engram itself did
    /// not flip and was returned unchanged.
    pub flips: bool,
}

/// Shrinks a flipping engram to a 1-minimal flipping subset: nodes are
/// dropped in canonical order whenever the remainder still flips, with
/// passes repeated until no single removal keeps the flip.
pub fn greedy_shrink(stack: &DecisionStack, input: &[f64], engram: &Engram) -> Result<ShrinkOutcome> {
    check_ablatable(stack, &engram.nodes)?;
    let original = stack.replay(input, &AblationMask::empty())?.label;
    let flips = |mask: &AblationMask| -> Result<bool> { Ok(stack.replay(input, mask)?.label != original) };

    let mut current = engram.nodes.clone();
    if !flips(&current)? {
        return Ok(ShrinkOutcome {
            nodes: current,
            flips: false,
        });
    }
    loop {
        let mut removed_any = false;
        let order: Vec<NodeId> = current.iter().copied().collect();
        for id in order {
            current.remove(&id);
            if flips(&current)? {
                removed_any = true;
            } else {
                current.insert(id);
            }
        }
        if !removed_any {
            break;
        }
    }
    Ok(ShrinkOutcome {
        nodes: current,
        flips: true,
    })
}

/// Smallest label-flipping subset of `candidates` of size at most
/// `max_size`. Subsets are tried by increasing size and, within a size, in
/// lexicographic canonical order; the first flipping one is returned.
pub fn minimal_flip_subset_exhaustive(
    stack: &DecisionStack,
    input: &[f64],
    candidates: &AblationMask,
    max_size: usize,
) -> Result<Option<AblationMask>> {
    if candidates.len() > EXHAUSTIVE_LIMIT {
        return Err(Error::Budget {
            candidates: candidates.len(),
            limit: EXHAUSTIVE_LIMIT,
        });
    }
    check_ablatable(stack, candidates)?;
    let original = stack.replay(input, &AblationMask::empty())?.label;
    let pool: Vec<NodeId> = candidates.iter().copied().collect();
    let n = pool.len();
    for size in 1..=max_size.min(n) {
        let mut idx: Vec<usize> = (0..size).collect();
        loop {
            let mask: AblationMask = idx.iter().map(|&i| pool[i]).collect();
            if stack.replay(input, &mask)?.label != original {
                return Ok(Some(mask));
            }
            if !next_combination(&mut idx, n) {
                break;
            }
        }
    }
    Ok(None)
}

/// Advances `idx` to the next k-combination of `0..n` in lexicographic
/// order. Returns false after the last one.
fn next_combination(idx: &mut [usize], n: usize) -> bool {
    let k = idx.len();
    let mut i = k;
    while i > 0 {
        i -= 1;
        if idx[i] < n - k + i {
            idx[i] += 1;
            for j in i + 1..k {
                idx[j] = idx[j - 1] + 1;
            }
            return true;
        }
    }
    false
}
