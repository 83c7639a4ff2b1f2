mod common;

use common::{cascade_config, Behavior, Stub};
use semcascade::gateway::run_dataset;
use semcascade::trace::{load_generations, load_trace, parse_dataset};
use serde_json::json;

const DATASET: &str = r#"{"id":"e1","prompt":"one","references":["one"],"task_metric":"exact_match"}
{"id":"e2","prompt":"two","references":["two"],"task_metric":"exact_match"}
{"id":"e3","prompt":"three","references":["three"],"task_metric":"exact_match"}
"#;

#[tokio::test]
async fn run_populates_and_resumes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("gens.jsonl");
    let a = Stub::start(Behavior::with_reply(|p| p.to_string())).await;
    let b = Stub::start(Behavior::with_reply(|p| format!("{p}!"))).await;
    let t = Stub::start(Behavior::with_reply(|p| p.to_string())).await;
    let policy = json!({"policy": "semantic", "metric": "rouge_l", "threshold": 0.5});
    let cfg = cascade_config(&[("a", &a), ("b", &b)], ("t", &t), policy, None);
    let examples = parse_dataset(DATASET).unwrap();

    let first = run_dataset(&cfg, &examples[..2], &out).await.unwrap();
    assert_eq!((first.appended, first.skipped), (6, 0));

    let second = run_dataset(&cfg, &examples, &out).await.unwrap();
    assert_eq!((second.appended, second.skipped), (3, 6));
    assert_eq!(a.chat_hits(), 3);
    assert_eq!(t.chat_hits(), 3);
    assert_eq!(load_generations(&out).unwrap().len(), 9);

    let ds = dir.path().join("d.jsonl");
    std::fs::write(&ds, DATASET).unwrap();
    let trace = load_trace(&ds, &out, &["a".into(), "b".into()], "t").unwrap();
    assert_eq!(trace.len(), 3);
}

#[tokio::test]
async fn run_reports_failures_without_recording_them() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("gens.jsonl");
    let a = Stub::start(Behavior::text("x")).await;
    let b = Stub::start(Behavior::text("y")).await;
    let t = Stub::start(Behavior::text("z").failing(500)).await;
    let policy = json!({"policy": "semantic", "metric": "rouge_l", "threshold": 0.5});
    let cfg = cascade_config(&[("a", &a), ("b", &b)], ("t", &t), policy, None);
    let examples = parse_dataset(DATASET).unwrap();
    let s = run_dataset(&cfg, &examples, &out).await.unwrap();
    assert_eq!(s.appended, 6);
    assert_eq!(s.failures.len(), 3);
    assert!(s.failures.iter().all(|f| f.1 == "t"));
}
