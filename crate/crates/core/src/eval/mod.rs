//! Offline evaluation over recorded traces: reference-based quality,
//! deferral curves, AUC-DF, and budget / latency operating points.

mod cost;
mod curve;
mod quality;
mod report;

use std::collections::BTreeMap;

use crate::confidence::CalibrationStats;
use crate::policy::{
    oracle_decide, partial_oracle_decide, semantic_decide, token_decide, Decision, PolicyConfig,
    PolicyError, PolicyKind, TokenOutput,
};
use crate::trace::Trace;

pub use cost::{CostModel, ModelCost};
pub use curve::{
    auc_df, curve_from_outcomes, deferral_order, latency_at_quality, quality_at_budget,
    random_baseline_auc, BudgetPoint, CurvePoint, DeferralCurve, ExampleOutcome, LatencyPoint,
};
pub use quality::{normalize_answer, quality_score, QualityScore};
pub use report::{emit_report, summarize, PolicySummary, CURVES_FILE, SUMMARY_FILE};

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error("no embeddings available for example {0:?}")]
    EmbeddingUnavailable(String),
    #[error("token policy {0} has no calibration statistics")]
    MissingCalibration(String),
    #[error("policy member {0:?} is not an ensemble model of this trace")]
    UnknownMember(String),
    #[error("policy {0} needs at least two ensemble members")]
    NeedsTwoMembers(String),
    #[error("trace has no examples")]
    EmptyTrace,
    #[error("no cost declared for model {0:?}")]
    UnknownModelCost(String),
    #[error("budget {budget} is below the ensemble-only cost {ensemble_cost}")]
    BudgetInfeasible { budget: f64, ensemble_cost: f64 },
    #[error("quality {required} is never reached; best on curve is {max_quality}")]
    ThresholdUnreachable { required: f64, max_quality: f64 },
    #[error("curves come from different traces ({0} vs {1})")]
    FingerprintMismatch(String, String),
    #[error("{0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Embedding vectors per example id, aligned with the trace's ensemble order.
pub type EmbeddingTable = BTreeMap<String, Vec<Vec<f64>>>;

/// Side inputs a policy may need beyond the trace itself.
#[derive(Debug, Clone, Copy)]
pub struct EvalContext<'a> {
    /// Costs are reported as zero when absent.
    pub cost: Option<&'a CostModel>,
    pub stats: Option<&'a CalibrationStats>,
    pub embeddings: Option<&'a EmbeddingTable>,
}

impl<'a> EvalContext<'a> {
    pub fn without_costs() -> Self {
        EvalContext {
            cost: None,
            stats: None,
            embeddings: None,
        }
    }

    pub fn new(cost: &'a CostModel) -> Self {
        EvalContext {
            cost: Some(cost),
            stats: None,
            embeddings: None,
        }
    }
}

fn member_indices(trace: &Trace, policy: &PolicyConfig) -> Result<Vec<usize>, EvalError> {
    match &policy.members {
        None => Ok((0..trace.ensemble_ids().len()).collect()),
        Some(ids) => ids
            .iter()
            .map(|id| {
                trace
                    .ensemble_ids()
                    .iter()
                    .position(|e| e == id)
                    .ok_or_else(|| EvalError::UnknownMember(id.clone()))
            })
            .collect(),
    }
}

/// Per-example decision and outcome of `policy` on `trace`.
pub fn policy_decisions(
    trace: &Trace,
    policy: &PolicyConfig,
    ctx: &EvalContext<'_>,
) -> Result<Vec<(Decision, ExampleOutcome)>, EvalError> {
    let members = member_indices(trace, policy)?;
    let label = policy.label();
    let needs_pairs = matches!(
        policy.kind,
        PolicyKind::Semantic { .. } | PolicyKind::PartialOracle { .. }
    );
    if needs_pairs && members.len() < 2 {
        return Err(EvalError::NeedsTwoMembers(label));
    }
    let threshold = policy.threshold().unwrap_or(0.0);

    let mut out = Vec::with_capacity(trace.len());
    for (ex, entry) in trace.iter() {
        let gens: Vec<_> = members.iter().map(|&i| &entry.ensemble[i]).collect();
        let qualities: Vec<f64> = gens.iter().map(|g| quality_score(&g.text, ex).value()).collect();
        let target_quality = quality_score(&entry.target.text, ex).value();

        let semantic = |metric, agg| -> Result<Decision, EvalError> {
            let texts: Vec<&str> = gens.iter().map(|g| g.text.as_str()).collect();
            let vectors = if crate::metrics::Metric::needs_embeddings(metric) {
                let table = ctx
                    .embeddings
                    .and_then(|t| t.get(&ex.id))
                    .ok_or_else(|| EvalError::EmbeddingUnavailable(ex.id.clone()))?;
                let picked = members
                    .iter()
                    .map(|&i| table.get(i).cloned())
                    .collect::<Option<Vec<_>>>()
                    .ok_or_else(|| EvalError::EmbeddingUnavailable(ex.id.clone()))?;
                Some(picked)
            } else {
                None
            };
            Ok(semantic_decide(&texts, metric, vectors.as_deref(), threshold, agg)?)
        };

        let mut decision = match &policy.kind {
            PolicyKind::Semantic { metric, aggregator, .. } => semantic(*metric, *aggregator)?,
            PolicyKind::Token { variant, .. } => {
                let stats = ctx
                    .stats
                    .ok_or_else(|| EvalError::MissingCalibration(label.clone()))?;
                let outputs: Vec<TokenOutput<'_>> = gens
                    .iter()
                    .map(|g| TokenOutput {
                        model_id: &g.model_id,
                        logprobs: g.logprobs.as_deref(),
                    })
                    .collect();
                token_decide(&outputs, *variant, stats, threshold)?
            }
            PolicyKind::Oracle => oracle_decide(&qualities, target_quality)?,
            PolicyKind::PartialOracle { metric, aggregator, .. } => {
                let s = semantic(*metric, *aggregator)?.deferral_score;
                partial_oracle_decide(&qualities, s, threshold)?
            }
        };
        decision.policy_id = label.clone();

        let cost_of = |g: &crate::clients::Generation| match ctx.cost {
            Some(c) => c.generation_cost(g),
            None => Ok(0.0),
        };
        let ensemble_cost = gens.iter().map(|g| cost_of(g)).sum::<Result<f64, _>>()?;
        let outcome = ExampleOutcome {
            example_id: ex.id.clone(),
            score: decision.deferral_score,
            selected_quality: qualities[decision.selected_index],
            target_quality,
            ensemble_cost,
            target_cost: cost_of(&entry.target)?,
            ensemble_latency_ms: gens.iter().map(|g| g.latency_ms).fold(0.0, f64::max),
            target_latency_ms: entry.target.latency_ms,
        };
        out.push((decision, outcome));
    }
    Ok(out)
}

/// Deferral curve of `policy` on `trace`.
pub fn deferral_curve(
    trace: &Trace,
    policy: &PolicyConfig,
    ctx: &EvalContext<'_>,
) -> Result<DeferralCurve, EvalError> {
    if trace.is_empty() {
        return Err(EvalError::EmptyTrace);
    }
    let outcomes: Vec<ExampleOutcome> = policy_decisions(trace, policy, ctx)?
        .into_iter()
        .map(|(_, o)| o)
        .collect();
    curve_from_outcomes(policy.label(), trace.fingerprint(), &outcomes)
}
