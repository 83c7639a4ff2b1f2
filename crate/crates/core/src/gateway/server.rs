use std::future::Future;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde_json::json;
use tokio::net::TcpListener;

use super::route::{parse_route_request, Cascade, RouteError};
use super::GatewayError;

impl IntoResponse for RouteError {
    fn into_response(self) -> Response {
        let body = json!({
            "error": {
                "message": self.to_string(),
                "model_id": self.model_id(),
            }
        });
        (self.status(), Json(body)).into_response()
    }
}

async fn completions(State(cascade): State<Arc<Cascade>>, body: Bytes) -> Result<Response, RouteError> {
    let req = parse_route_request(&body)?;
    let resp = cascade.route(&req).await?;
    Ok(Json(resp).into_response())
}

async fn healthz() -> impl IntoResponse {
    (
        StatusCode::OK,
        Json(json!({"status": "ok", "version": env!("CARGO_PKG_VERSION")})),
    )
}

async fn config(State(cascade): State<Arc<Cascade>>) -> impl IntoResponse {
    Json(cascade.config().redacted())
}

pub fn router(cascade: Arc<Cascade>) -> Router {
    Router::new()
        .route("/v1/cascade/completions", post(completions))
        .route("/v1/cascade/config", get(config))
        .route("/healthz", get(healthz))
        .with_state(cascade)
}

/// Serves on an already-bound listener until `shutdown` resolves.
pub async fn serve_listener<F>(listener: TcpListener, cascade: Arc<Cascade>, shutdown: F) -> Result<(), GatewayError>
where
    F: Future<Output = ()> + Send + 'static,
{
    axum::serve(listener, router(cascade))
        .with_graceful_shutdown(shutdown)
        .await?;
    Ok(())
}

/// Binds `addr` and serves until Ctrl-C.
pub async fn serve(cascade: Arc<Cascade>, addr: &str) -> Result<(), GatewayError> {
    let listener = TcpListener::bind(addr).await.map_err(|source| GatewayError::Bind {
        addr: addr.to_string(),
        source,
    })?;
    tracing::info!("listening on {}", listener.local_addr()?);
    serve_listener(listener, cascade, async {
        let _ = tokio::signal::ctrl_c().await;
    })
    .await
}
