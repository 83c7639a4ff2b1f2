//! Black-box access to OpenAI-compatible chat-completion and embedding
//! endpoints, with wall-clock latency measurement and concurrent fan-out.

use std::time::{Duration, Instant};

use futures::future::join_all;
use serde::{Deserialize, Serialize};
use serde_json::json;

/// Length of the upstream body kept in [`ClientError::Http`].
const BODY_EXCERPT_CHARS: usize = 200;

#[derive(Debug, thiserror::Error)]
pub enum ClientError {
    #[error("request to {endpoint} timed out after {timeout_ms} ms")]
    Timeout { endpoint: String, timeout_ms: u64 },
    #[error("{endpoint} answered HTTP {status}: {body}")]
    Http {
        endpoint: String,
        status: u16,
        body: String,
    },
    #[error("malformed response: {0}")]
    MalformedResponse(String),
    #[error("endpoint {0} returned no log-probabilities")]
    MissingLogprobs(String),
    #[error("embedding dimensions differ: {expected} vs {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("embedding request needs at least one text")]
    NoInput,
    #[error("environment variable {0} (API key) is not set")]
    MissingCredential(String),
    #[error("transport error talking to {endpoint}: {message}")]
    Transport { endpoint: String, message: String },
    #[error("ensemble member {id} failed: {cause}")]
    EnsembleMemberFailure {
        id: String,
        #[source]
        cause: Box<ClientError>,
    },
    #[error("only {survivors} ensemble members answered; at least 2 are required")]
    InsufficientSurvivors {
        survivors: usize,
        failures: Vec<(String, String)>,
    },
    #[error("fan-out needs at least one endpoint")]
    NoEndpoints,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EndpointSpec {
    pub id: String,
    pub base_url: String,
    pub model_name: String,
    /// Name of the environment variable holding the bearer token.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub api_key_ref: Option<String>,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    #[serde(default)]
    pub wants_logprobs: bool,
}

fn default_timeout_ms() -> u64 {
    30_000
}

impl EndpointSpec {
    pub fn new(id: impl Into<String>, base_url: impl Into<String>, model_name: impl Into<String>) -> Self {
        EndpointSpec {
            id: id.into(),
            base_url: base_url.into(),
            model_name: model_name.into(),
            api_key_ref: None,
            timeout_ms: default_timeout_ms(),
            wants_logprobs: false,
        }
    }

    fn url(&self, path: &str) -> String {
        format!("{}{}", self.base_url.trim_end_matches('/'), path)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecodingParams {
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u32,
    /// Fail with [`ClientError::MissingLogprobs`] when a logprob-requesting
    /// endpoint answers without them. Set by policies that need them.
    #[serde(skip)]
    pub require_logprobs: bool,
}

fn default_max_tokens() -> u32 {
    256
}

impl Default for DecodingParams {
    fn default() -> Self {
        DecodingParams {
            temperature: 0.0,
            max_tokens: default_max_tokens(),
            require_logprobs: false,
        }
    }
}

/// One model's full response to one query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Generation {
    pub model_id: String,
    pub text: String,
    pub logprobs: Option<Vec<f64>>,
    pub latency_ms: f64,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnsembleResult {
    pub query_id: String,
    pub generations: Vec<Generation>,
    /// Members dropped in degrade mode, with the failure message.
    pub failures: Vec<(String, String)>,
}

impl EnsembleResult {
    /// Members run in parallel, so the ensemble stage costs the slowest one.
    pub fn latency_ms(&self) -> f64 {
        self.generations.iter().map(|g| g.latency_ms).fold(0.0, f64::max)
    }

    pub fn degraded(&self) -> bool {
        !self.failures.is_empty()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureMode {
    /// Any member error fails the whole fan-out.
    #[default]
    FailFast,
    /// Drop failed members as long as two or more answer.
    Degrade,
}

/// Fields read from a chat-completion body.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedCompletion {
    pub text: String,
    pub logprobs: Option<Vec<f64>>,
    pub prompt_tokens: Option<u64>,
    pub completion_tokens: Option<u64>,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
    #[serde(default)]
    usage: Option<Usage>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatMessage,
    #[serde(default)]
    logprobs: Option<ChoiceLogprobs>,
}

#[derive(Deserialize)]
struct ChatMessage {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Deserialize)]
struct ChoiceLogprobs {
    #[serde(default)]
    content: Option<Vec<TokenLogprob>>,
}

#[derive(Deserialize)]
struct TokenLogprob {
    logprob: f64,
}

#[derive(Deserialize)]
struct Usage {
    #[serde(default)]
    prompt_tokens: Option<u64>,
    #[serde(default)]
    completion_tokens: Option<u64>,
}

/// Extracts text, token log-probabilities and usage from a chat-completion body.
pub fn parse_chat_completion(body: &[u8]) -> Result<ParsedCompletion, ClientError> {
    let resp: ChatResponse =
        serde_json::from_slice(body).map_err(|e| ClientError::MalformedResponse(e.to_string()))?;
    let choice = resp
        .choices
        .into_iter()
        .next()
        .ok_or_else(|| ClientError::MalformedResponse("no choices".into()))?;
    let text = choice
        .message
        .content
        .ok_or_else(|| ClientError::MalformedResponse("choice has no message content".into()))?;
    let logprobs = choice
        .logprobs
        .and_then(|l| l.content)
        .map(|tokens| tokens.into_iter().map(|t| t.logprob).collect::<Vec<_>>());
    if let Some(lp) = &logprobs {
        if let Some(bad) = lp.iter().find(|v| !v.is_finite() || **v > 0.0) {
            return Err(ClientError::MalformedResponse(format!("invalid token logprob {bad}")));
        }
    }
    let (prompt_tokens, completion_tokens) = resp
        .usage
        .map(|u| (u.prompt_tokens, u.completion_tokens))
        .unwrap_or((None, None));
    Ok(ParsedCompletion {
        text,
        logprobs,
        prompt_tokens,
        completion_tokens,
    })
}

#[derive(Deserialize)]
struct EmbeddingsResponse {
    data: Vec<EmbeddingItem>,
}

#[derive(Deserialize)]
struct EmbeddingItem {
    embedding: Vec<f64>,
    #[serde(default)]
    index: Option<usize>,
}

/// Extracts `data[*].embedding`, reordered by `index` when the server sends it.
pub fn parse_embeddings(body: &[u8]) -> Result<Vec<Vec<f64>>, ClientError> {
    let resp: EmbeddingsResponse =
        serde_json::from_slice(body).map_err(|e| ClientError::MalformedResponse(e.to_string()))?;
    let mut items = resp.data;
    if items.iter().all(|i| i.index.is_some()) {
        items.sort_by_key(|i| i.index);
        if items.iter().enumerate().any(|(k, i)| i.index != Some(k)) {
            return Err(ClientError::MalformedResponse("embedding indices are not 0..n".into()));
        }
    }
    let vectors: Vec<Vec<f64>> = items.into_iter().map(|i| i.embedding).collect();
    if let Some(first) = vectors.first() {
        let expected = first.len();
        if let Some(v) = vectors.iter().find(|v| v.len() != expected) {
            return Err(ClientError::DimensionMismatch {
                expected,
                found: v.len(),
            });
        }
    }
    if vectors.iter().flatten().any(|x| !x.is_finite()) {
        return Err(ClientError::MalformedResponse("non-finite embedding component".into()));
    }
    Ok(vectors)
}

/// Shared HTTP client. Cheap to clone; holds no per-request state.
#[derive(Debug, Clone, Default)]
pub struct ModelClient {
    http: reqwest::Client,
}

impl ModelClient {
    pub fn new() -> Self {
        ModelClient {
            http: reqwest::Client::new(),
        }
    }

    fn request(&self, ep: &EndpointSpec, path: &str) -> Result<reqwest::RequestBuilder, ClientError> {
        let mut req = self
            .http
            .post(ep.url(path))
            .timeout(Duration::from_millis(ep.timeout_ms));
        if let Some(var) = &ep.api_key_ref {
            let key = std::env::var(var).map_err(|_| ClientError::MissingCredential(var.clone()))?;
            req = req.bearer_auth(key);
        }
        Ok(req)
    }

    async fn send(&self, ep: &EndpointSpec, req: reqwest::RequestBuilder) -> Result<Vec<u8>, ClientError> {
        let map_err = |e: reqwest::Error| {
            if e.is_timeout() {
                ClientError::Timeout {
                    endpoint: ep.id.clone(),
                    timeout_ms: ep.timeout_ms,
                }
            } else {
                ClientError::Transport {
                    endpoint: ep.id.clone(),
                    message: e.to_string(),
                }
            }
        };
        let resp = req.send().await.map_err(map_err)?;
        let status = resp.status();
        let body = resp.bytes().await.map_err(map_err)?;
        if !status.is_success() {
            let text = String::from_utf8_lossy(&body);
            return Err(ClientError::Http {
                endpoint: ep.id.clone(),
                status: status.as_u16(),
                body: text.chars().take(BODY_EXCERPT_CHARS).collect(),
            });
        }
        Ok(body.to_vec())
    }

    /// One chat-completion call, timed around the single request.
    pub async fn complete(
        &self,
        ep: &EndpointSpec,
        prompt: &str,
        decoding: &DecodingParams,
    ) -> Result<Generation, ClientError> {
        let body = json!({
            "model": ep.model_name,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": decoding.temperature,
            "max_tokens": decoding.max_tokens,
            "logprobs": ep.wants_logprobs,
        });
        let req = self.request(ep, "/v1/chat/completions")?.json(&body);

        let started = Instant::now();
        let raw = self.send(ep, req).await?;
        let latency_ms = started.elapsed().as_secs_f64() * 1e3;

        let parsed = parse_chat_completion(&raw)?;
        let logprobs = if ep.wants_logprobs { parsed.logprobs } else { None };
        if ep.wants_logprobs && decoding.require_logprobs && logprobs.is_none() {
            return Err(ClientError::MissingLogprobs(ep.id.clone()));
        }
        let completion_tokens = match (parsed.completion_tokens, &logprobs) {
            (Some(n), Some(lp)) if n as usize != lp.len() => {
                return Err(ClientError::MalformedResponse(format!(
                    "usage reports {n} completion tokens but {} logprobs were returned",
                    lp.len()
                )));
            }
            (Some(n), _) => n,
            (None, Some(lp)) => lp.len() as u64,
            (None, None) => 0,
        };
        Ok(Generation {
            model_id: ep.id.clone(),
            text: parsed.text,
            logprobs,
            latency_ms,
            prompt_tokens: parsed.prompt_tokens.unwrap_or(0),
            completion_tokens,
        })
    }

    /// One embeddings call; vectors come back in input order.
    pub async fn embed(&self, ep: &EndpointSpec, texts: &[String]) -> Result<Vec<Vec<f64>>, ClientError> {
        if texts.is_empty() {
            return Err(ClientError::NoInput);
        }
        let body = json!({ "model": ep.model_name, "input": texts });
        let req = self.request(ep, "/v1/embeddings")?.json(&body);
        let raw = self.send(ep, req).await?;
        let vectors = parse_embeddings(&raw)?;
        if vectors.len() != texts.len() {
            return Err(ClientError::MalformedResponse(format!(
                "{} embeddings returned for {} inputs",
                vectors.len(),
                texts.len()
            )));
        }
        Ok(vectors)
    }

    /// Queries every endpoint concurrently. Result order follows `eps`.
    pub async fn fanout(
        &self,
        query_id: impl Into<String>,
        eps: &[EndpointSpec],
        prompt: &str,
        decoding: &DecodingParams,
        mode: FailureMode,
    ) -> Result<EnsembleResult, ClientError> {
        if eps.is_empty() {
            return Err(ClientError::NoEndpoints);
        }
        let results = join_all(eps.iter().map(|ep| self.complete(ep, prompt, decoding))).await;

        let mut generations = Vec::with_capacity(eps.len());
        let mut failures = Vec::new();
        for (ep, res) in eps.iter().zip(results) {
            match res {
                Ok(g) => generations.push(g),
                Err(e) if mode == FailureMode::FailFast => {
                    return Err(ClientError::EnsembleMemberFailure {
                        id: ep.id.clone(),
                        cause: Box::new(e),
                    });
                }
                Err(e) => failures.push((ep.id.clone(), e.to_string())),
            }
        }
        if !failures.is_empty() && generations.len() < 2 {
            return Err(ClientError::InsufficientSurvivors {
                survivors: generations.len(),
                failures,
            });
        }
        Ok(EnsembleResult {
            query_id: query_id.into(),
            generations,
            failures,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_chat_completion_with_logprobs() {
        let body = br#"{"choices":[{"message":{"role":"assistant","content":"Paris"},
            "logprobs":{"content":[{"token":"Paris","logprob":-0.1}]}}],
            "usage":{"prompt_tokens":7,"completion_tokens":1}}"#;
        let p = parse_chat_completion(body).unwrap();
        assert_eq!(p.text, "Paris");
        assert_eq!(p.logprobs, Some(vec![-0.1]));
        assert_eq!((p.prompt_tokens, p.completion_tokens), (Some(7), Some(1)));
    }

    #[test]
    fn logprobs_are_optional() {
        let body = br#"{"choices":[{"message":{"content":"hi"}}]}"#;
        let p = parse_chat_completion(body).unwrap();
        assert_eq!(p.logprobs, None);
        let body = br#"{"choices":[{"message":{"content":"hi"},"logprobs":null}]}"#;
        assert_eq!(parse_chat_completion(body).unwrap().logprobs, None);
    }

    #[test]
    fn rejects_malformed_completions() {
        for body in [
            &b"not json"[..],
            br#"{"choices":[]}"#,
            br#"{"choices":[{"message":{}}]}"#,
            br#"{"choices":[{"message":{"content":"x"},"logprobs":{"content":[{"logprob":0.5}]}}]}"#,
        ] {
            assert!(matches!(parse_chat_completion(body), Err(ClientError::MalformedResponse(_))));
        }
    }

    #[test]
    fn embeddings_follow_index() {
        let body = br#"{"data":[{"index":1,"embedding":[0,1]},{"index":0,"embedding":[1,0]}]}"#;
        assert_eq!(parse_embeddings(body).unwrap(), vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
        let ragged = br#"{"data":[{"embedding":[0,1]},{"embedding":[1,0,2]}]}"#;
        assert!(matches!(
            parse_embeddings(ragged),
            Err(ClientError::DimensionMismatch { expected: 2, found: 3 })
        ));
    }

    #[test]
    fn decoding_defaults_are_greedy() {
        let d: DecodingParams = serde_json::from_str("{}").unwrap();
        assert_eq!(d, DecodingParams::default());
        assert_eq!(d.temperature, 0.0);
    }

    #[test]
    fn ensemble_latency_is_slowest_member() {
        let g = |id: &str, ms: f64| Generation {
            model_id: id.into(),
            text: String::new(),
            logprobs: None,
            latency_ms: ms,
            prompt_tokens: 0,
            completion_tokens: 0,
        };
        let r = EnsembleResult {
            query_id: "q".into(),
            generations: vec![g("a", 10.0), g("b", 30.0), g("c", 20.0)],
            failures: vec![],
        };
        assert_eq!(r.latency_ms(), 30.0);
    }
}
