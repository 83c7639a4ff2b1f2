#![allow(dead_code)]

use std::net::SocketAddr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

pub mod oracle;
pub mod synth;

use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::post;
use axum::{Json, Router};
use semcascade::clients::EndpointSpec;
use serde_json::{json, Value};
use tokio::net::TcpListener;

pub type TextFn = Arc<dyn Fn(&str) -> String + Send + Sync>;
pub type VecFn = Arc<dyn Fn(&str) -> Vec<f64> + Send + Sync>;

/// Behaviour of a fake OpenAI-compatible endpoint.
#[derive(Clone)]
pub struct Behavior {
    pub reply: TextFn,
    /// Per-token log-probabilities for the reply; `None` omits the field.
    pub logprobs: Option<VecFn>,
    pub delay: Duration,
    pub fail_status: Option<u16>,
    pub embed: Option<VecFn>,
}

impl Behavior {
    pub fn text(t: &str) -> Self {
        let t = t.to_string();
        Behavior {
            reply: Arc::new(move |_| t.clone()),
            logprobs: None,
            delay: Duration::ZERO,
            fail_status: None,
            embed: None,
        }
    }

    pub fn with_reply(f: impl Fn(&str) -> String + Send + Sync + 'static) -> Self {
        Behavior {
            reply: Arc::new(f),
            ..Behavior::text("")
        }
    }

    pub fn logprobs(mut self, f: impl Fn(&str) -> Vec<f64> + Send + Sync + 'static) -> Self {
        self.logprobs = Some(Arc::new(f));
        self
    }

    pub fn delay_ms(mut self, ms: u64) -> Self {
        self.delay = Duration::from_millis(ms);
        self
    }

    pub fn failing(mut self, status: u16) -> Self {
        self.fail_status = Some(status);
        self
    }

    pub fn embedding(mut self, f: impl Fn(&str) -> Vec<f64> + Send + Sync + 'static) -> Self {
        self.embed = Some(Arc::new(f));
        self
    }
}

struct Shared {
    behavior: Behavior,
    chat_hits: AtomicUsize,
    embed_hits: AtomicUsize,
}

pub struct Stub {
    pub addr: SocketAddr,
    shared: Arc<Shared>,
}

impl Stub {
    pub async fn start(behavior: Behavior) -> Stub {
        let shared = Arc::new(Shared {
            behavior,
            chat_hits: AtomicUsize::new(0),
            embed_hits: AtomicUsize::new(0),
        });
        let app = Router::new()
            .route("/v1/chat/completions", post(chat))
            .route("/v1/embeddings", post(embeddings))
            .with_state(shared.clone());
        let listener = TcpListener::bind("127.0.0.1:0").await.unwrap();
        let addr = listener.local_addr().unwrap();
        tokio::spawn(async move {
            axum::serve(listener, app).await.unwrap();
        });
        Stub { addr, shared }
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn endpoint(&self, id: &str) -> EndpointSpec {
        EndpointSpec::new(id, self.url(), format!("{id}-model"))
    }

    pub fn chat_hits(&self) -> usize {
        self.shared.chat_hits.load(Ordering::SeqCst)
    }

    pub fn embed_hits(&self) -> usize {
        self.shared.embed_hits.load(Ordering::SeqCst)
    }
}

async fn chat(State(s): State<Arc<Shared>>, Json(body): Json<Value>) -> Response {
    s.chat_hits.fetch_add(1, Ordering::SeqCst);
    let b = &s.behavior;
    tokio::time::sleep(b.delay).await;
    if let Some(code) = b.fail_status {
        return (StatusCode::from_u16(code).unwrap(), "stub failure").into_response();
    }
    let prompt = body["messages"][0]["content"].as_str().unwrap_or_default();
    let text = (b.reply)(prompt);
    let want = body["logprobs"].as_bool().unwrap_or(false);
    let mut choice = json!({"index": 0, "message": {"role": "assistant", "content": text}});
    let mut completion_tokens = text.split_whitespace().count().max(1);
    if let (true, Some(f)) = (want, &b.logprobs) {
        let lps = f(&text);
        completion_tokens = lps.len();
        choice["logprobs"] = json!({
            "content": lps.iter().map(|l| json!({"token": "t", "logprob": l})).collect::<Vec<_>>()
        });
    }
    Json(json!({
        "id": "stub",
        "model": body["model"],
        "choices": [choice],
        "usage": {"prompt_tokens": prompt.split_whitespace().count(), "completion_tokens": completion_tokens}
    }))
    .into_response()
}

async fn embeddings(State(s): State<Arc<Shared>>, Json(body): Json<Value>) -> Response {
    s.embed_hits.fetch_add(1, Ordering::SeqCst);
    let b = &s.behavior;
    tokio::time::sleep(b.delay).await;
    let Some(f) = &b.embed else {
        return (StatusCode::NOT_FOUND, "no embeddings").into_response();
    };
    let inputs: Vec<String> = serde_json::from_value(body["input"].clone()).unwrap_or_default();
    // Reverse order on the wire; clients must reorder by index.
    let data: Vec<Value> = inputs
        .iter()
        .enumerate()
        .rev()
        .map(|(i, t)| json!({"object": "embedding", "index": i, "embedding": f(t)}))
        .collect();
    Json(json!({"data": data})).into_response()
}

/// Deterministic 64-bit FNV-1a.
pub fn fnv(s: &str) -> u64 {
    s.bytes()
        .fold(0xcbf29ce484222325u64, |h, b| (h ^ b as u64).wrapping_mul(0x100000001b3))
}

/// Dyadic per-token log-probabilities derived from the text itself.
pub fn text_logprobs(text: &str) -> Vec<f64> {
    text.split_whitespace()
        .map(|w| -((fnv(w) % 16) as f64 + 1.0) / 16.0)
        .collect()
}

/// Cascade configuration JSON over running stubs, with unit token costs.
pub fn cascade_config(
    ensemble: &[(&str, &Stub)],
    target: (&str, &Stub),
    policy: Value,
    record: Option<&std::path::Path>,
) -> semcascade::gateway::CascadeConfig {
    let ep = |id: &str, s: &Stub, lp: bool| {
        json!({"id": id, "base_url": s.url(), "model_name": format!("{id}-model"),
               "timeout_ms": 5000, "wants_logprobs": lp})
    };
    let token = policy["policy"] == "token";
    let mut cost = serde_json::Map::new();
    for (id, _) in ensemble {
        cost.insert(id.to_string(), json!({"unit_cost_per_token": 1.0}));
    }
    cost.insert(target.0.to_string(), json!({"unit_cost_per_token": 10.0}));
    let mut cfg = json!({
        "ensemble": ensemble.iter().map(|(id, s)| ep(id, s, token)).collect::<Vec<_>>(),
        "target": ep(target.0, target.1, false),
        "policy": policy,
        "cost_model": cost,
        "decoding": {"max_tokens": 32},
    });
    if let Some(p) = record {
        cfg["record"] = json!(p);
    }
    semcascade::gateway::CascadeConfig::from_json(&cfg.to_string()).unwrap()
}

/// Serves `cascade` on an ephemeral port for the rest of the test.
pub async fn spawn_gateway(cascade: semcascade::gateway::Cascade) -> String {
    let listener = TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(semcascade::gateway::serve_listener(
        listener,
        Arc::new(cascade),
        std::future::pending(),
    ));
    format!("http://{addr}")
}
