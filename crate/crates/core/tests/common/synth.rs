//! Randomized synthetic traces with exactly representable qualities and costs.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use semcascade::clients::Generation;
use semcascade::confidence::{chow_score_raw, fit_calibration, CalibrationStats, ChowVariant};
use semcascade::eval::{CostModel, ExampleOutcome};
use semcascade::trace::{DatasetExample, TaskMetric, Trace, TraceEntry};

pub const ANSWERS: &[&str] = &[
    "red apple",
    "green pear",
    "blue plum",
    "red pear",
    "a yellow apple pie",
    "green apple",
];

pub const ENSEMBLE: &[&str] = &["s0", "s1", "s2"];
pub const TARGET: &str = "t";

fn generation(rng: &mut impl Rng, model: &str, text: &str, slow: bool) -> Generation {
    let completion_tokens = rng.gen_range(1..6u64);
    let logprobs = (0..completion_tokens)
        .map(|_| -(rng.gen_range(0..48) as f64) / 16.0)
        .collect();
    Generation {
        model_id: model.to_string(),
        text: text.to_string(),
        logprobs: Some(logprobs),
        latency_ms: if slow {
            rng.gen_range(100..1000)
        } else {
            rng.gen_range(1..100)
        } as f64,
        prompt_tokens: rng.gen_range(1..20),
        completion_tokens,
    }
}

/// `n` exact-match examples; every output is drawn from [`ANSWERS`], so
/// qualities are 0 or 1 and agreement among members varies.
pub fn trace(rng: &mut impl Rng, n: usize) -> Trace {
    let mut examples = Vec::with_capacity(n);
    let mut entries = Vec::with_capacity(n);
    for i in 0..n {
        let reference = *ANSWERS.choose(rng).unwrap();
        examples.push(DatasetExample {
            id: format!("ex{i:02}"),
            prompt: format!("question {i}"),
            references: vec![reference.to_string()],
            task_metric: TaskMetric::ExactMatch,
        });
        let ensemble = ENSEMBLE
            .iter()
            .map(|m| {
                let text = if rng.gen_bool(0.4) { reference } else { *ANSWERS.choose(rng).unwrap() };
                generation(rng, m, text, false)
            })
            .collect();
        let target_text = if rng.gen_bool(0.75) { reference } else { *ANSWERS.choose(rng).unwrap() };
        entries.push(TraceEntry {
            ensemble,
            target: generation(rng, TARGET, target_text, true),
        });
    }
    Trace::new(
        examples,
        ENSEMBLE.iter().map(|s| s.to_string()).collect(),
        TARGET.to_string(),
        entries,
    )
    .unwrap()
}

pub fn costs() -> CostModel {
    CostModel::from_unit_costs([("s0", 1.0), ("s1", 2.0), ("s2", 3.0), (TARGET, 20.0)]).unwrap()
}

pub fn stats(trace: &Trace, variant: ChowVariant) -> CalibrationStats {
    let raw: BTreeMap<String, Vec<f64>> = trace
        .logprobs_by_model()
        .into_iter()
        .map(|(m, seqs)| (m, seqs.iter().map(|s| chow_score_raw(s, variant).unwrap()).collect()))
        .collect();
    fit_calibration(&raw, variant).unwrap()
}

/// Outcomes with dyadic scores (many ties), dyadic qualities, integer costs
/// and latencies.
pub fn outcomes(rng: &mut impl Rng, n: usize) -> Vec<ExampleOutcome> {
    (0..n)
        .map(|i| ExampleOutcome {
            example_id: format!("o{i:02}"),
            score: rng.gen_range(-256..=256) as f64 / 64.0 * if rng.gen_bool(0.3) { 0.0 } else { 1.0 },
            selected_quality: rng.gen_range(0..=8) as f64 / 8.0,
            target_quality: rng.gen_range(0..=8) as f64 / 8.0,
            ensemble_cost: rng.gen_range(0..50) as f64,
            target_cost: rng.gen_range(50..500) as f64,
            ensemble_latency_ms: rng.gen_range(0..100) as f64,
            target_latency_ms: rng.gen_range(100..2000) as f64,
        })
        .collect()
}
