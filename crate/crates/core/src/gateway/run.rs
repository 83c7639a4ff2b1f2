use std::collections::HashSet;
use std::path::Path;

use futures::future::join_all;
use serde::Serialize;

use super::{CascadeConfig, GatewayError};
use crate::clients::ModelClient;
use crate::trace::{load_generations, DatasetExample, GenerationRecord, TraceWriter};

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct RunSummary {
    pub examples: usize,
    pub appended: usize,
    pub skipped: usize,
    /// `(example_id, model_id, error)` for calls that failed; re-running fills them in.
    pub failures: Vec<(String, String, String)>,
}

/// Queries every configured model (ensemble and target) for every example,
/// appending to `out`. Pairs already present in `out` are skipped, so an
/// interrupted run resumes where it stopped.
///
/// Examples run one at a time; within an example all models are queried
/// concurrently, each with a single request.
pub async fn run_dataset(
    cfg: &CascadeConfig,
    examples: &[DatasetExample],
    out: impl AsRef<Path>,
) -> Result<RunSummary, GatewayError> {
    cfg.validate()?;
    let out = out.as_ref();
    let done: HashSet<(String, String)> = if out.exists() {
        load_generations(out)?
            .into_iter()
            .map(|r| (r.example_id, r.model_id))
            .collect()
    } else {
        HashSet::new()
    };
    let mut writer = TraceWriter::open(out)?;
    let client = ModelClient::new();
    let endpoints: Vec<_> = cfg.ensemble.iter().chain([&cfg.target]).collect();

    let mut summary = RunSummary {
        examples: examples.len(),
        ..RunSummary::default()
    };
    for ex in examples {
        let pending: Vec<_> = endpoints
            .iter()
            .filter(|ep| !done.contains(&(ex.id.clone(), ep.id.clone())))
            .collect();
        summary.skipped += endpoints.len() - pending.len();
        let results = join_all(
            pending
                .iter()
                .map(|ep| client.complete(ep, &ex.prompt, &cfg.decoding)),
        )
        .await;
        for (ep, res) in pending.iter().zip(results) {
            match res {
                Ok(g) => {
                    writer.append(&GenerationRecord::new(ex.id.clone(), g))?;
                    summary.appended += 1;
                }
                Err(e) => {
                    tracing::warn!("{} / {}: {e}", ex.id, ep.id);
                    summary.failures.push((ex.id.clone(), ep.id.clone(), e.to_string()));
                }
            }
        }
    }
    Ok(summary)
}
