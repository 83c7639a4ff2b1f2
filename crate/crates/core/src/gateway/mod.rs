//! Live routing: fan out to the ensemble, decide, defer to the target when
//! agreement is low. Also trace population and threshold calibration for the
//! CLI.

mod config;
mod route;
mod run;
mod server;
mod threshold;

pub use config::CascadeConfig;
pub use route::{
    parse_route_request, Cascade, CascadeDiagnostics, LatencyBreakdown, RouteError, RouteRequest,
    RouteResponse,
};
pub use run::{run_dataset, RunSummary};
pub use server::{router, serve, serve_listener};
pub use threshold::{calibrate_threshold, threshold_for_rate};

#[derive(Debug, thiserror::Error)]
pub enum GatewayError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("trace has no examples")]
    EmptyTrace,
    #[error("{0}")]
    InvalidArgument(String),
    #[error("cannot bind {addr}: {source}")]
    Bind {
        addr: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Eval(#[from] crate::eval::EvalError),
    #[error(transparent)]
    Trace(#[from] crate::trace::TraceError),
    #[error(transparent)]
    Confidence(#[from] crate::confidence::ConfidenceError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
