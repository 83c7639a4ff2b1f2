//! Cascade routing for open-ended generation.
//!
//! An ensemble of small model endpoints answers each query; agreement among
//! their outputs decides whether to keep the ensemble's answer or defer to a
//! large target endpoint. The [`eval`] module replays recorded traces to
//! build deferral curves and cost / latency operating points.

pub mod clients;
pub mod confidence;
pub mod eval;
pub mod gateway;
pub mod metrics;
pub mod policy;
pub mod trace;
