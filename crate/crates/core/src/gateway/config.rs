use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::GatewayError;
use crate::clients::{DecodingParams, EndpointSpec, FailureMode};
use crate::eval::CostModel;
use crate::policy::{PolicyConfig, PolicyKind};

/// Whole-gateway configuration, read from one JSON file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CascadeConfig {
    pub ensemble: Vec<EndpointSpec>,
    pub target: EndpointSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding: Option<EndpointSpec>,
    pub policy: PolicyConfig,
    #[serde(default)]
    pub cost_model: CostModel,
    #[serde(default)]
    pub decoding: DecodingParams,
    #[serde(default)]
    pub fanout: FailureMode,
    /// Generations file that live requests are appended to, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub record: Option<PathBuf>,
}

impl CascadeConfig {
    pub fn from_json(text: &str) -> Result<Self, GatewayError> {
        let cfg: CascadeConfig =
            serde_json::from_str(text).map_err(|e| GatewayError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, GatewayError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| GatewayError::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn ensemble_ids(&self) -> Vec<String> {
        self.ensemble.iter().map(|e| e.id.clone()).collect()
    }

    /// Ensemble endpoints the policy actually uses, in policy order.
    pub fn policy_members(&self) -> Result<Vec<&EndpointSpec>, GatewayError> {
        match &self.policy.members {
            None => Ok(self.ensemble.iter().collect()),
            Some(ids) => ids
                .iter()
                .map(|id| {
                    self.ensemble
                        .iter()
                        .find(|e| &e.id == id)
                        .ok_or_else(|| GatewayError::Config(format!("policy member {id:?} is not in the ensemble")))
                })
                .collect(),
        }
    }

    /// Structural checks shared by every command.
    pub fn validate(&self) -> Result<(), GatewayError> {
        let bad = |m: String| Err(GatewayError::Config(m));
        if self.ensemble.is_empty() {
            return bad("ensemble must list at least one endpoint".into());
        }
        let mut ids = BTreeSet::new();
        for ep in &self.ensemble {
            if !ids.insert(ep.id.as_str()) {
                return bad(format!("ensemble id {:?} is repeated", ep.id));
            }
        }
        if ids.contains(self.target.id.as_str()) {
            return bad(format!("target id {:?} is also an ensemble id", self.target.id));
        }
        for ep in self.ensemble.iter().chain([&self.target]).chain(self.embedding.as_ref()) {
            if ep.timeout_ms == 0 {
                return bad(format!("endpoint {:?} has timeout_ms = 0", ep.id));
            }
        }
        self.policy
            .validate()
            .map_err(|e| GatewayError::Config(e.to_string()))?;
        let members = self.policy_members()?;

        let wants_embeddings = self.policy.metric().is_some_and(|m| m.needs_embeddings());
        if wants_embeddings != self.embedding.is_some() {
            return bad(if wants_embeddings {
                "embedding_cosine needs an embedding endpoint".into()
            } else {
                "an embedding endpoint is configured but the metric does not use it".into()
            });
        }
        if matches!(self.policy.kind, PolicyKind::Semantic { .. } | PolicyKind::PartialOracle { .. })
            && members.len() < 2
        {
            return bad("semantic agreement needs at least two ensemble members".into());
        }
        if !(self.decoding.temperature.is_finite() && self.decoding.temperature >= 0.0) {
            return bad("decoding temperature must be finite and >= 0".into());
        }
        self.cost_model
            .validate()
            .map_err(|e| GatewayError::Config(e.to_string()))?;
        Ok(())
    }

    /// Checks that the configuration can answer live requests.
    pub fn validate_for_serving(&self) -> Result<(), GatewayError> {
        self.validate()?;
        match &self.policy.kind {
            PolicyKind::Oracle | PolicyKind::PartialOracle { .. } => {
                return Err(GatewayError::Config(
                    "oracle policies need reference answers and cannot route live traffic".into(),
                ));
            }
            PolicyKind::Token { .. } => {
                if let Some(ep) = self.policy_members()?.iter().find(|e| !e.wants_logprobs) {
                    return Err(GatewayError::Config(format!(
                        "token policy needs logprobs but endpoint {:?} does not request them",
                        ep.id
                    )));
                }
            }
            PolicyKind::Semantic { .. } => {}
        }
        if self.policy.threshold().is_none() {
            return Err(GatewayError::Config("live routing needs policy.threshold".into()));
        }
        Ok(())
    }

    /// Copy safe to expose: URL credentials removed.
    pub fn redacted(&self) -> CascadeConfig {
        let mut cfg = self.clone();
        for ep in cfg.ensemble.iter_mut().chain([&mut cfg.target]).chain(cfg.embedding.as_mut()) {
            if let Ok(mut url) = reqwest::Url::parse(&ep.base_url) {
                if !url.username().is_empty() || url.password().is_some() {
                    let _ = url.set_username("");
                    let _ = url.set_password(None);
                    ep.base_url = url.to_string();
                }
            }
        }
        cfg
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const SAMPLE: &str = r#"{
        "ensemble": [
            {"id": "small-a", "base_url": "http://localhost:9001", "model_name": "qwen-1.5b", "timeout_ms": 5000},
            {"id": "small-b", "base_url": "http://localhost:9002", "model_name": "gemma-1b", "timeout_ms": 5000}
        ],
        "target": {"id": "big", "base_url": "http://user:pw@localhost:9100", "model_name": "llama-70b", "api_key_ref": "BIG_KEY", "timeout_ms": 60000},
        "policy": {"policy": "semantic", "metric": "rouge_l", "aggregator": "max", "threshold": 0.7},
        "cost_model": {"small-a": {"parameters": 1.5e9}, "small-b": {"parameters": 1e9}, "big": {"parameters": 7e10}},
        "decoding": {"max_tokens": 64}
    }"#;

    fn sample() -> CascadeConfig {
        CascadeConfig::from_json(SAMPLE).unwrap()
    }

    #[test]
    fn parses_and_validates() {
        let cfg = sample();
        assert_eq!(cfg.ensemble_ids(), ["small-a", "small-b"]);
        assert_eq!(cfg.decoding.temperature, 0.0);
        assert_eq!(cfg.fanout, FailureMode::FailFast);
        cfg.validate_for_serving().unwrap();
    }

    #[test]
    fn redaction_strips_url_credentials() {
        let r = sample().redacted();
        assert!(!r.target.base_url.contains("pw"));
        assert_eq!(r.target.api_key_ref.as_deref(), Some("BIG_KEY"));
    }

    fn with(edit: impl FnOnce(&mut serde_json::Value)) -> Result<CascadeConfig, GatewayError> {
        let mut v: serde_json::Value = serde_json::from_str(SAMPLE).unwrap();
        edit(&mut v);
        CascadeConfig::from_json(&v.to_string())
    }

    #[test]
    fn rejects_invalid_model_sets() {
        assert!(with(|v| v["target"]["id"] = "small-a".into()).is_err());
        assert!(with(|v| v["ensemble"][1]["id"] = "small-a".into()).is_err());
        assert!(with(|v| v["ensemble"][0]["timeout_ms"] = 0.into()).is_err());
        assert!(with(|v| v["policy"]["members"] = serde_json::json!(["small-a"])).is_err());
        assert!(with(|v| v["policy"]["metric"] = "embedding_cosine".into()).is_err());
        assert!(with(|v| v["surprise"] = 1.into()).is_err());
    }

    #[test]
    fn serving_needs_live_policy() {
        let cfg = with(|v| v["policy"] = serde_json::json!({"policy": "oracle"})).unwrap();
        assert!(cfg.validate_for_serving().is_err());
        let cfg = with(|v| v["policy"] = serde_json::json!({"policy": "semantic", "metric": "bleu"})).unwrap();
        assert!(cfg.validate_for_serving().is_err());
        let cfg = with(|v| {
            v["policy"] = serde_json::json!({"policy": "token", "variant": {"kind": "avg"}, "threshold": 0.0})
        })
        .unwrap();
        assert!(cfg.validate_for_serving().is_err());
    }
}
