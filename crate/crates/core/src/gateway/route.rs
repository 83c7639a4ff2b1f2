use std::collections::BTreeMap;
use std::sync::Mutex;

use axum::http::StatusCode;
use serde::{Deserialize, Serialize};

use super::{CascadeConfig, GatewayError};
use crate::clients::{ClientError, DecodingParams, EnsembleResult, Generation, ModelClient};
use crate::confidence::CalibrationStats;
use crate::policy::{semantic_decide, token_decide, Decision, PolicyKind, TokenOutput};
use crate::trace::{GenerationRecord, TraceWriter};

/// Body of `POST /v1/cascade/completions`. Only decoding parameters may be
/// overridden per request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RouteRequest {
    pub prompt: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_tokens: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temperature: Option<f64>,
}

pub fn parse_route_request(body: &[u8]) -> Result<RouteRequest, RouteError> {
    let req: RouteRequest =
        serde_json::from_slice(body).map_err(|e| RouteError::BadRequest(e.to_string()))?;
    if req.prompt.trim().is_empty() {
        return Err(RouteError::BadRequest("prompt must not be empty".into()));
    }
    if req.max_tokens == Some(0) {
        return Err(RouteError::BadRequest("max_tokens must be positive".into()));
    }
    if let Some(t) = req.temperature {
        if !(t.is_finite() && t >= 0.0) {
            return Err(RouteError::BadRequest("temperature must be finite and >= 0".into()));
        }
    }
    Ok(req)
}

#[derive(Debug, thiserror::Error)]
pub enum RouteError {
    #[error("bad request: {0}")]
    BadRequest(String),
    #[error("upstream {model_id} failed: {cause}")]
    UpstreamFailure { model_id: String, cause: String },
    #[error("ensemble unavailable: {0}")]
    EnsembleUnavailable(String),
    #[error("internal error: {0}")]
    Internal(String),
}

impl RouteError {
    pub fn status(&self) -> StatusCode {
        match self {
            RouteError::BadRequest(_) => StatusCode::BAD_REQUEST,
            RouteError::UpstreamFailure { .. } => StatusCode::BAD_GATEWAY,
            RouteError::EnsembleUnavailable(_) => StatusCode::SERVICE_UNAVAILABLE,
            RouteError::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }

    pub fn model_id(&self) -> Option<&str> {
        match self {
            RouteError::UpstreamFailure { model_id, .. } => Some(model_id),
            _ => None,
        }
    }

    fn from_fanout(e: ClientError) -> Self {
        match e {
            ClientError::EnsembleMemberFailure { id, cause } => RouteError::UpstreamFailure {
                model_id: id,
                cause: cause.to_string(),
            },
            other => RouteError::EnsembleUnavailable(other.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyBreakdown {
    pub ensemble: f64,
    /// Absent when the query was not deferred.
    pub target: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CascadeDiagnostics {
    pub deferred: bool,
    pub score: f64,
    pub selected_model: String,
    pub scores: BTreeMap<String, f64>,
    pub latency_ms: LatencyBreakdown,
    pub est_cost: Option<f64>,
    /// Some ensemble members failed and were dropped.
    pub degraded: bool,
    pub policy: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouteResponse {
    /// Request id; also the `example_id` of any recorded generations.
    pub id: String,
    pub text: String,
    pub cascade: CascadeDiagnostics,
}

/// A validated configuration plus everything needed to answer requests.
/// Immutable after construction except for the serialized trace writer.
#[derive(Debug)]
pub struct Cascade {
    config: CascadeConfig,
    client: ModelClient,
    stats: Option<CalibrationStats>,
    recorder: Option<Mutex<TraceWriter>>,
}

impl Cascade {
    /// Validates `config` for live use, loading calibration for token policies.
    pub fn new(config: CascadeConfig) -> Result<Self, GatewayError> {
        let stats = match &config.policy.kind {
            PolicyKind::Token { calibration: Some(path), .. } => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| GatewayError::Config(format!("{}: {e}", path.display())))?;
                Some(CalibrationStats::from_json(&text)?)
            }
            _ => None,
        };
        Self::with_stats(config, stats)
    }

    pub fn with_stats(config: CascadeConfig, stats: Option<CalibrationStats>) -> Result<Self, GatewayError> {
        config.validate_for_serving()?;
        if let PolicyKind::Token { variant, .. } = &config.policy.kind {
            let stats = stats
                .as_ref()
                .ok_or_else(|| GatewayError::Config("token policy needs calibration statistics".into()))?;
            if stats.variant() != *variant {
                return Err(GatewayError::Config(format!(
                    "calibration fitted for {} but policy uses {variant}",
                    stats.variant()
                )));
            }
            for ep in config.policy_members()? {
                if stats.get(&ep.id).is_none() {
                    return Err(GatewayError::Config(format!("no calibration for model {:?}", ep.id)));
                }
            }
        }
        let recorder = match &config.record {
            Some(path) => Some(Mutex::new(TraceWriter::open(path)?)),
            None => None,
        };
        Ok(Cascade {
            config,
            client: ModelClient::new(),
            stats,
            recorder,
        })
    }

    pub fn config(&self) -> &CascadeConfig {
        &self.config
    }

    fn decoding_for(&self, req: &RouteRequest) -> DecodingParams {
        let mut d = self.config.decoding;
        if let Some(m) = req.max_tokens {
            d.max_tokens = m;
        }
        if let Some(t) = req.temperature {
            d.temperature = t;
        }
        d.require_logprobs = matches!(self.config.policy.kind, PolicyKind::Token { .. });
        d
    }

    async fn decide(&self, ens: &EnsembleResult) -> Result<Decision, RouteError> {
        let threshold = self
            .config
            .policy
            .threshold()
            .ok_or_else(|| RouteError::Internal("no threshold configured".into()))?;
        let decision = match &self.config.policy.kind {
            PolicyKind::Semantic { metric, aggregator, .. } => {
                let texts: Vec<String> = ens.generations.iter().map(|g| g.text.clone()).collect();
                let vectors = match (&self.config.embedding, metric.needs_embeddings()) {
                    (Some(ep), true) => Some(self.client.embed(ep, &texts).await.map_err(|e| {
                        RouteError::UpstreamFailure {
                            model_id: ep.id.clone(),
                            cause: e.to_string(),
                        }
                    })?),
                    _ => None,
                };
                semantic_decide(&texts, *metric, vectors.as_deref(), threshold, *aggregator)
            }
            PolicyKind::Token { variant, .. } => {
                let stats = self
                    .stats
                    .as_ref()
                    .ok_or_else(|| RouteError::Internal("calibration missing".into()))?;
                let outputs: Vec<TokenOutput<'_>> = ens
                    .generations
                    .iter()
                    .map(|g| TokenOutput {
                        model_id: &g.model_id,
                        logprobs: g.logprobs.as_deref(),
                    })
                    .collect();
                token_decide(&outputs, *variant, stats, threshold)
            }
            PolicyKind::Oracle | PolicyKind::PartialOracle { .. } => {
                return Err(RouteError::Internal("oracle policies cannot route live traffic".into()));
            }
        };
        decision.map_err(|e| RouteError::Internal(e.to_string()))
    }

    fn estimate_cost(&self, gens: &[&Generation]) -> Option<f64> {
        gens.iter()
            .map(|g| self.config.cost_model.generation_cost(g).ok())
            .sum()
    }

    fn record(&self, id: &str, gens: &[&Generation]) {
        let Some(recorder) = &self.recorder else { return };
        let mut w = recorder.lock().unwrap_or_else(|p| p.into_inner());
        for g in gens {
            if let Err(e) = w.append(&GenerationRecord::new(id, (*g).clone())) {
                tracing::error!("failed to record generation for {id}: {e}");
            }
        }
    }

    /// Answers one request end to end.
    pub async fn route(&self, req: &RouteRequest) -> Result<RouteResponse, RouteError> {
        let id = uuid::Uuid::new_v4().to_string();
        let decoding = self.decoding_for(req);
        let members: Vec<_> = self
            .config
            .policy_members()
            .map_err(|e| RouteError::Internal(e.to_string()))?
            .into_iter()
            .cloned()
            .collect();

        let ens = self
            .client
            .fanout(id.clone(), &members, &req.prompt, &decoding, self.config.fanout)
            .await
            .map_err(RouteError::from_fanout)?;
        let decision = self.decide(&ens).await?;
        let selected = &ens.generations[decision.selected_index];

        let target = if decision.deferred {
            let mut target_decoding = decoding;
            target_decoding.require_logprobs = false;
            Some(
                self.client
                    .complete(&self.config.target, &req.prompt, &target_decoding)
                    .await
                    .map_err(|e| RouteError::UpstreamFailure {
                        model_id: self.config.target.id.clone(),
                        cause: e.to_string(),
                    })?,
            )
        } else {
            None
        };

        let mut used: Vec<&Generation> = ens.generations.iter().collect();
        used.extend(target.as_ref());
        self.record(&id, &used);

        let scores = ens
            .generations
            .iter()
            .zip(decision.per_output_scores.as_slice())
            .map(|(g, &s)| (g.model_id.clone(), s))
            .collect();
        Ok(RouteResponse {
            text: target.as_ref().map_or_else(|| selected.text.clone(), |t| t.text.clone()),
            cascade: CascadeDiagnostics {
                deferred: decision.deferred,
                score: decision.deferral_score,
                selected_model: selected.model_id.clone(),
                scores,
                latency_ms: LatencyBreakdown {
                    ensemble: ens.latency_ms(),
                    target: target.as_ref().map(|t| t.latency_ms),
                },
                est_cost: self.estimate_cost(&used),
                degraded: ens.degraded(),
                policy: self.config.policy.label(),
            },
            id,
        })
    }
}
