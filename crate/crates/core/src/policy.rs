//! Cascade decision rules.
//!
//! Every policy reduces an ensemble's outputs to a [`Decision`]: which output
//! would be returned, a scalar deferral score (higher means more certain), and
//! whether that score falls strictly below the threshold. The selection is
//! reported even when deferring so offline curve construction can re-threshold
//! the same scores at every deferral rate.

use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::confidence::{chow_score_raw, z_normalize, CalibrationStats, ChowVariant, ConfidenceError};
use crate::metrics::{agreement_matrix, mean_pairwise_scores, Metric, MetricError, OutputScores};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum PolicyError {
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Confidence(#[from] ConfidenceError),
    #[error("output from model {0:?} carries no log-probabilities")]
    MissingLogProbs(String),
    #[error("policy needs at least one ensemble output")]
    EmptyEnsemble,
    #[error("calibration was fitted for {fitted} but the policy uses {requested}")]
    VariantMismatch { fitted: ChowVariant, requested: ChowVariant },
    #[error("non-finite {0}")]
    NonFinite(&'static str),
    #[error("invalid policy configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregator {
    #[default]
    Max,
    Mean,
}

impl Aggregator {
    /// Reduces per-output scores to one deferral score. Input must be non-empty.
    pub fn apply(self, scores: &[f64]) -> f64 {
        match self {
            Aggregator::Max => scores.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            Aggregator::Mean => order_free_mean(scores),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Aggregator::Max => "max",
            Aggregator::Mean => "mean",
        }
    }
}

/// Mean summed in ascending order so that it is invariant under permutation.
pub(crate) fn order_free_mean(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.iter().sum::<f64>() / sorted.len() as f64
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax_lowest(values: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &v) in values.iter().enumerate() {
        match best {
            Some(b) if v <= values[b] => {}
            _ => best = Some(i),
        }
    }
    best
}

/// A cascade verdict for one query.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Decision {
    pub selected_index: usize,
    pub deferral_score: f64,
    pub deferred: bool,
    pub per_output_scores: OutputScores,
    pub policy_id: String,
}

fn build_decision(
    scores: Vec<f64>,
    deferral_score: f64,
    threshold: f64,
    policy_id: String,
) -> Result<Decision, PolicyError> {
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(PolicyError::NonFinite("per-output score"));
    }
    if deferral_score.is_nan() {
        return Err(PolicyError::NonFinite("deferral score"));
    }
    let selected_index = argmax_lowest(&scores).ok_or(PolicyError::EmptyEnsemble)?;
    Ok(Decision {
        selected_index,
        deferral_score,
        deferred: deferral_score < threshold,
        per_output_scores: OutputScores(scores),
        policy_id,
    })
}

/// Decision from precomputed consensus scores `o`.
pub fn decide_from_output_scores(
    scores: &OutputScores,
    threshold: f64,
    agg: Aggregator,
    policy_id: impl Into<String>,
) -> Result<Decision, PolicyError> {
    if scores.is_empty() {
        return Err(PolicyError::EmptyEnsemble);
    }
    let s = agg.apply(scores.as_slice());
    build_decision(scores.0.clone(), s, threshold, policy_id.into())
}

/// Semantic-agreement cascade: consensus scores from pairwise similarity.
pub fn semantic_decide<S: AsRef<str>>(
    outputs: &[S],
    metric: Metric,
    embeddings: Option<&[Vec<f64>]>,
    threshold: f64,
    agg: Aggregator,
) -> Result<Decision, PolicyError> {
    let m = agreement_matrix(outputs, metric, embeddings)?;
    let o = mean_pairwise_scores(&m);
    decide_from_output_scores(&o, threshold, agg, format!("semantic:{metric}:{}", agg.as_str()))
}

/// One ensemble member's output as seen by the token-level policy.
#[derive(Debug, Clone, Copy)]
pub struct TokenOutput<'a> {
    pub model_id: &'a str,
    pub logprobs: Option<&'a [f64]>,
}

/// Token-confidence cascade: z-normalized Chow scores, selected by max and
/// deferred on the mean.
pub fn token_decide(
    outputs: &[TokenOutput<'_>],
    variant: ChowVariant,
    stats: &CalibrationStats,
    threshold: f64,
) -> Result<Decision, PolicyError> {
    if outputs.is_empty() {
        return Err(PolicyError::EmptyEnsemble);
    }
    if stats.variant() != variant {
        return Err(PolicyError::VariantMismatch {
            fitted: stats.variant(),
            requested: variant,
        });
    }
    let mut z = Vec::with_capacity(outputs.len());
    for out in outputs {
        let lp = out
            .logprobs
            .ok_or_else(|| PolicyError::MissingLogProbs(out.model_id.to_string()))?;
        if lp.is_empty() {
            return Err(PolicyError::MissingLogProbs(out.model_id.to_string()));
        }
        let raw = chow_score_raw(lp, variant)?;
        z.push(z_normalize(raw, out.model_id, stats)?);
    }
    let s = if z.len() == 1 { z[0] } else { order_free_mean(&z) };
    build_decision(z, s, threshold, format!("token:{variant}"))
}

/// Full-knowledge upper bound: keep the best small output, defer by how much
/// the target beats it. The implied threshold is 0 (defer iff the target is
/// strictly better).
pub fn oracle_decide(qualities: &[f64], target_quality: f64) -> Result<Decision, PolicyError> {
    if qualities.is_empty() {
        return Err(PolicyError::EmptyEnsemble);
    }
    if !target_quality.is_finite() {
        return Err(PolicyError::NonFinite("target quality"));
    }
    let best = qualities.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    build_decision(qualities.to_vec(), best - target_quality, 0.0, "oracle".into())
}

/// Best small output always, deferral by a supplied (semantic) score.
pub fn partial_oracle_decide(
    qualities: &[f64],
    score: f64,
    threshold: f64,
) -> Result<Decision, PolicyError> {
    if qualities.is_empty() {
        return Err(PolicyError::EmptyEnsemble);
    }
    build_decision(qualities.to_vec(), score, threshold, "partial_oracle".into())
}

/// Serialized policy selection, e.g.
/// `{"policy":"semantic","metric":"rouge_l","aggregator":"max","threshold":0.7}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyConfig {
    /// Label used in reports; derived from the policy when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    /// Restrict the policy to a subset of the ensemble, in this order.
    /// A single member gives a single-model token cascade.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub members: Option<Vec<String>>,
    #[serde(flatten)]
    pub kind: PolicyKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case")]
pub enum PolicyKind {
    Semantic {
        metric: Metric,
        #[serde(default)]
        aggregator: Aggregator,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        threshold: Option<f64>,
    },
    Token {
        variant: ChowVariant,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        threshold: Option<f64>,
        /// Path of a calibration document fitted for `variant`.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        calibration: Option<PathBuf>,
    },
    Oracle,
    PartialOracle {
        metric: Metric,
        #[serde(default)]
        aggregator: Aggregator,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        threshold: Option<f64>,
    },
}

impl PolicyConfig {
    pub fn new(kind: PolicyKind) -> Self {
        PolicyConfig {
            id: None,
            members: None,
            kind,
        }
    }

    pub fn from_json(text: &str) -> Result<Self, PolicyError> {
        let cfg: PolicyConfig =
            serde_json::from_str(text).map_err(|e| PolicyError::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Accepts either one policy object or an array of them.
    pub fn list_from_json(text: &str) -> Result<Vec<Self>, PolicyError> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| PolicyError::InvalidConfig(e.to_string()))?;
        let list: Vec<PolicyConfig> = if value.is_array() {
            serde_json::from_value(value)
        } else {
            serde_json::from_value(value).map(|p| vec![p])
        }
        .map_err(|e| PolicyError::InvalidConfig(e.to_string()))?;
        for p in &list {
            p.validate()?;
        }
        Ok(list)
    }

    pub fn validate(&self) -> Result<(), PolicyError> {
        if let Some(m) = &self.members {
            if m.is_empty() {
                return Err(PolicyError::InvalidConfig("members list is empty".into()));
            }
            let mut seen = std::collections::BTreeSet::new();
            if let Some(dup) = m.iter().find(|id| !seen.insert(id.as_str())) {
                return Err(PolicyError::InvalidConfig(format!("member {dup:?} listed twice")));
            }
        }
        match &self.kind {
            PolicyKind::Token { variant, threshold, .. } => {
                variant.validate()?;
                check_threshold(*threshold)
            }
            PolicyKind::Semantic { threshold, .. } | PolicyKind::PartialOracle { threshold, .. } => {
                check_threshold(*threshold)
            }
            PolicyKind::Oracle => Ok(()),
        }
    }

    pub fn threshold(&self) -> Option<f64> {
        match &self.kind {
            PolicyKind::Semantic { threshold, .. }
            | PolicyKind::Token { threshold, .. }
            | PolicyKind::PartialOracle { threshold, .. } => *threshold,
            PolicyKind::Oracle => None,
        }
    }

    pub fn metric(&self) -> Option<Metric> {
        match &self.kind {
            PolicyKind::Semantic { metric, .. } | PolicyKind::PartialOracle { metric, .. } => Some(*metric),
            _ => None,
        }
    }

    /// Report label: explicit `id`, else a description of the policy.
    pub fn label(&self) -> String {
        if let Some(id) = &self.id {
            return id.clone();
        }
        let base = match &self.kind {
            PolicyKind::Semantic { metric, aggregator, .. } => {
                format!("semantic:{metric}:{}", aggregator.as_str())
            }
            PolicyKind::Token { variant, .. } => format!("token:{variant}"),
            PolicyKind::Oracle => "oracle".to_string(),
            PolicyKind::PartialOracle { metric, aggregator, .. } => {
                format!("partial_oracle:{metric}:{}", aggregator.as_str())
            }
        };
        match &self.members {
            Some(m) => format!("{base}[{}]", m.join("+")),
            None => base,
        }
    }
}

fn check_threshold(t: Option<f64>) -> Result<(), PolicyError> {
    match t {
        Some(v) if !v.is_finite() => Err(PolicyError::InvalidConfig(format!("threshold {v} is not finite"))),
        _ => Ok(()),
    }
}

impl fmt::Display for PolicyConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}
