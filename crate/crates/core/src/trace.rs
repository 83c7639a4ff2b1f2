//! Dataset ingestion and JSONL record/replay of generations.
//!
//! Two files make a trace: the dataset (`id`, `prompt`, `references`,
//! `task_metric` per line) and an append-only generations log with one
//! [`GenerationRecord`] per line. Completeness is checked when the two are
//! joined by [`load_trace`], not while writing, so interrupted runs resume by
//! filling in only the missing `(example, model)` pairs.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::clients::Generation;

#[derive(Debug, thiserror::Error)]
pub enum TraceError {
    #[error("line {line}: {message}")]
    ParseError { line: usize, message: String },
    #[error("line {line}: duplicate example id {id:?}")]
    DuplicateId { line: usize, id: String },
    #[error("line {line}: missing field {field:?}")]
    MissingField { line: usize, field: &'static str },
    #[error("duplicate generation for example {example_id:?}, model {model_id:?}")]
    DuplicateGeneration { example_id: String, model_id: String },
    #[error("example {example_id:?} has no generation from model {model_id:?}")]
    IncompleteTrace { example_id: String, model_id: String },
    #[error("generation references unknown example {0:?}")]
    UnknownExample(String),
    #[error("invalid model set: {0}")]
    InvalidModelSet(String),
    #[error("unknown task metric {0:?}")]
    UnknownMetric(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Reference-based quality metric attached to an example.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", try_from = "String", into = "String")]
pub enum TaskMetric {
    ExactMatch,
    RougeL,
    Bleu,
}

impl TaskMetric {
    pub fn as_str(self) -> &'static str {
        match self {
            TaskMetric::ExactMatch => "exact_match",
            TaskMetric::RougeL => "rouge_l",
            TaskMetric::Bleu => "bleu",
        }
    }
}

impl FromStr for TaskMetric {
    type Err = TraceError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "exact_match" => Ok(TaskMetric::ExactMatch),
            "rouge_l" => Ok(TaskMetric::RougeL),
            "bleu" => Ok(TaskMetric::Bleu),
            other => Err(TraceError::UnknownMetric(other.to_string())),
        }
    }
}

impl TryFrom<String> for TaskMetric {
    type Error = TraceError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<TaskMetric> for String {
    fn from(m: TaskMetric) -> String {
        m.as_str().to_string()
    }
}

impl fmt::Display for TaskMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetExample {
    pub id: String,
    pub prompt: String,
    pub references: Vec<String>,
    pub task_metric: TaskMetric,
}

/// One persisted generation: the example it answers plus the [`Generation`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub example_id: String,
    pub model_id: String,
    pub text: String,
    pub logprobs: Option<Vec<f64>>,
    pub latency_ms: f64,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

impl GenerationRecord {
    pub fn new(example_id: impl Into<String>, g: Generation) -> Self {
        GenerationRecord {
            example_id: example_id.into(),
            model_id: g.model_id,
            text: g.text,
            logprobs: g.logprobs,
            latency_ms: g.latency_ms,
            prompt_tokens: g.prompt_tokens,
            completion_tokens: g.completion_tokens,
        }
    }

    pub fn generation(&self) -> Generation {
        Generation {
            model_id: self.model_id.clone(),
            text: self.text.clone(),
            logprobs: self.logprobs.clone(),
            latency_ms: self.latency_ms,
            prompt_tokens: self.prompt_tokens,
            completion_tokens: self.completion_tokens,
        }
    }

    fn validate(&self) -> Result<(), String> {
        if !self.latency_ms.is_finite() || self.latency_ms < 0.0 {
            return Err(format!("latency_ms {} must be finite and >= 0", self.latency_ms));
        }
        if let Some(lp) = &self.logprobs {
            if lp.iter().any(|v| !v.is_finite() || *v > 0.0) {
                return Err("logprobs must be finite and <= 0".into());
            }
            if lp.len() as u64 != self.completion_tokens {
                return Err(format!(
                    "{} logprobs for {} completion tokens",
                    lp.len(),
                    self.completion_tokens
                ));
            }
        }
        Ok(())
    }
}

const DATASET_FIELDS: [&str; 4] = ["id", "prompt", "references", "task_metric"];
const RECORD_FIELDS: [&str; 7] = [
    "example_id",
    "model_id",
    "text",
    "logprobs",
    "latency_ms",
    "prompt_tokens",
    "completion_tokens",
];

fn parse_line<T: for<'de> Deserialize<'de>>(
    line_no: usize,
    line: &str,
    required: &[&'static str],
) -> Result<T, TraceError> {
    let value: serde_json::Value = serde_json::from_str(line).map_err(|e| TraceError::ParseError {
        line: line_no,
        message: e.to_string(),
    })?;
    let obj = value.as_object().ok_or_else(|| TraceError::ParseError {
        line: line_no,
        message: "expected a JSON object".into(),
    })?;
    if let Some(field) = required.iter().find(|f| !obj.contains_key(**f)) {
        return Err(TraceError::MissingField { line: line_no, field });
    }
    serde_json::from_value(value).map_err(|e| TraceError::ParseError {
        line: line_no,
        message: e.to_string(),
    })
}

/// Parses dataset JSONL text. Blank lines are skipped; order is preserved.
pub fn parse_dataset(text: &str) -> Result<Vec<DatasetExample>, TraceError> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let ex: DatasetExample = parse_line(line_no, line, &DATASET_FIELDS)?;
        if ex.references.is_empty() {
            return Err(TraceError::ParseError {
                line: line_no,
                message: "references must not be empty".into(),
            });
        }
        if !seen.insert(ex.id.clone()) {
            return Err(TraceError::DuplicateId { line: line_no, id: ex.id });
        }
        out.push(ex);
    }
    Ok(out)
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Vec<DatasetExample>, TraceError> {
    parse_dataset(&std::fs::read_to_string(path)?)
}

/// Parses generations JSONL text.
///
/// A final line without a terminating newline that fails to parse is a torn
/// append from an interrupted writer and is ignored.
pub fn parse_generations(text: &str) -> Result<Vec<GenerationRecord>, TraceError> {
    let torn_tail = !text.is_empty() && !text.ends_with('\n');
    let line_count = text.lines().count();
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let parsed = parse_line::<GenerationRecord>(line_no, line, &RECORD_FIELDS).and_then(|rec| {
            rec.validate()
                .map(|()| rec)
                .map_err(|message| TraceError::ParseError { line: line_no, message })
        });
        match parsed {
            Ok(rec) => out.push(rec),
            Err(e) if torn_tail && line_no == line_count => {
                tracing::warn!("ignoring torn final generations line: {e}");
            }
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

pub fn load_generations(path: impl AsRef<Path>) -> Result<Vec<GenerationRecord>, TraceError> {
    parse_generations(&std::fs::read_to_string(path)?)
}

fn record_line(rec: &GenerationRecord) -> Vec<u8> {
    let mut line = serde_json::to_vec(rec).expect("generation records always serialize");
    line.push(b'\n');
    line
}

/// Appends one record as a single JSON line (newlines in text are escaped).
pub fn append_generation(path: impl AsRef<Path>, rec: &GenerationRecord) -> Result<(), TraceError> {
    let mut f = OpenOptions::new().create(true).append(true).open(path)?;
    f.write_all(&record_line(rec))?;
    Ok(())
}

/// Single owner of an open generations file.
#[derive(Debug)]
pub struct TraceWriter {
    file: File,
}

impl TraceWriter {
    pub fn open(path: impl AsRef<Path>) -> Result<Self, TraceError> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(TraceWriter { file })
    }

    pub fn append(&mut self, rec: &GenerationRecord) -> Result<(), TraceError> {
        self.file.write_all(&record_line(rec))?;
        self.file.flush()?;
        Ok(())
    }
}

/// Generations for one example: ensemble members in declared order, then the target.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceEntry {
    pub ensemble: Vec<Generation>,
    pub target: Generation,
}

/// A dataset joined with a complete set of generations.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trace {
    examples: Vec<DatasetExample>,
    ensemble_ids: Vec<String>,
    target_id: String,
    entries: Vec<TraceEntry>,
}

fn check_model_set(ensemble_ids: &[String], target_id: &str) -> Result<(), TraceError> {
    if ensemble_ids.is_empty() {
        return Err(TraceError::InvalidModelSet("no ensemble models declared".into()));
    }
    let mut seen = BTreeSet::new();
    for id in ensemble_ids {
        if !seen.insert(id.as_str()) {
            return Err(TraceError::InvalidModelSet(format!("ensemble id {id:?} repeated")));
        }
    }
    if seen.contains(target_id) {
        return Err(TraceError::InvalidModelSet(format!(
            "target {target_id:?} is also an ensemble member"
        )));
    }
    Ok(())
}

impl Trace {
    /// Builds a trace from already-aligned entries (one per example).
    pub fn new(
        examples: Vec<DatasetExample>,
        ensemble_ids: Vec<String>,
        target_id: String,
        entries: Vec<TraceEntry>,
    ) -> Result<Self, TraceError> {
        check_model_set(&ensemble_ids, &target_id)?;
        if entries.len() != examples.len() {
            return Err(TraceError::InvalidModelSet(format!(
                "{} entries for {} examples",
                entries.len(),
                examples.len()
            )));
        }
        for (ex, entry) in examples.iter().zip(&entries) {
            for (k, id) in ensemble_ids.iter().enumerate() {
                if entry.ensemble.get(k).map(|g| &g.model_id) != Some(id) {
                    return Err(TraceError::IncompleteTrace {
                        example_id: ex.id.clone(),
                        model_id: id.clone(),
                    });
                }
            }
            if entry.ensemble.len() != ensemble_ids.len() || entry.target.model_id != target_id {
                return Err(TraceError::IncompleteTrace {
                    example_id: ex.id.clone(),
                    model_id: target_id.clone(),
                });
            }
        }
        Ok(Trace {
            examples,
            ensemble_ids,
            target_id,
            entries,
        })
    }

    /// Joins a dataset with generation records, keeping only declared models.
    pub fn assemble(
        examples: Vec<DatasetExample>,
        records: Vec<GenerationRecord>,
        ensemble_ids: Vec<String>,
        target_id: String,
    ) -> Result<Self, TraceError> {
        check_model_set(&ensemble_ids, &target_id)?;
        let known: HashSet<&str> = examples.iter().map(|e| e.id.as_str()).collect();
        let wanted: HashSet<&str> = ensemble_ids
            .iter()
            .map(String::as_str)
            .chain(std::iter::once(target_id.as_str()))
            .collect();

        let mut by_pair: HashMap<(String, String), Generation> = HashMap::new();
        for rec in &records {
            if !known.contains(rec.example_id.as_str()) {
                return Err(TraceError::UnknownExample(rec.example_id.clone()));
            }
            let key = (rec.example_id.clone(), rec.model_id.clone());
            if by_pair.contains_key(&key) {
                return Err(TraceError::DuplicateGeneration {
                    example_id: key.0,
                    model_id: key.1,
                });
            }
            if wanted.contains(rec.model_id.as_str()) {
                by_pair.insert(key, rec.generation());
            }
        }

        let mut entries = Vec::with_capacity(examples.len());
        for ex in &examples {
            let mut take = |model: &str| {
                by_pair
                    .remove(&(ex.id.clone(), model.to_string()))
                    .ok_or_else(|| TraceError::IncompleteTrace {
                        example_id: ex.id.clone(),
                        model_id: model.to_string(),
                    })
            };
            let ensemble = ensemble_ids.iter().map(|id| take(id)).collect::<Result<Vec<_>, _>>()?;
            let target = take(&target_id)?;
            entries.push(TraceEntry { ensemble, target });
        }
        Ok(Trace {
            examples,
            ensemble_ids,
            target_id,
            entries,
        })
    }

    pub fn examples(&self) -> &[DatasetExample] {
        &self.examples
    }

    pub fn entries(&self) -> &[TraceEntry] {
        &self.entries
    }

    pub fn ensemble_ids(&self) -> &[String] {
        &self.ensemble_ids
    }

    pub fn target_id(&self) -> &str {
        &self.target_id
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&DatasetExample, &TraceEntry)> {
        self.examples.iter().zip(&self.entries)
    }

    /// First `n` examples as a trace of their own (calibration subsets).
    pub fn prefix(&self, n: usize) -> Trace {
        let n = n.min(self.len());
        Trace {
            examples: self.examples[..n].to_vec(),
            ensemble_ids: self.ensemble_ids.clone(),
            target_id: self.target_id.clone(),
            entries: self.entries[..n].to_vec(),
        }
    }

    /// All generation records, example-major, ensemble order then target.
    pub fn records(&self) -> Vec<GenerationRecord> {
        self.iter()
            .flat_map(|(ex, entry)| {
                entry
                    .ensemble
                    .iter()
                    .chain(std::iter::once(&entry.target))
                    .map(move |g| GenerationRecord::new(ex.id.clone(), g.clone()))
            })
            .collect()
    }

    /// SHA-256 over the canonical JSON form of the whole trace.
    pub fn fingerprint(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("traces always serialize");
        hex::encode(Sha256::digest(&canonical))
    }

    /// Token log-probabilities grouped by model id, over every example.
    pub fn logprobs_by_model(&self) -> BTreeMap<String, Vec<&[f64]>> {
        let mut out: BTreeMap<String, Vec<&[f64]>> = BTreeMap::new();
        for entry in &self.entries {
            for g in entry.ensemble.iter().chain(std::iter::once(&entry.target)) {
                if let Some(lp) = g.logprobs.as_deref() {
                    out.entry(g.model_id.clone()).or_default().push(lp);
                }
            }
        }
        out
    }
}

/// Reads and joins a dataset and a generations file.
pub fn load_trace(
    dataset_path: impl AsRef<Path>,
    generations_path: impl AsRef<Path>,
    ensemble_ids: &[String],
    target_id: &str,
) -> Result<Trace, TraceError> {
    let examples = load_dataset(dataset_path)?;
    let records = load_generations(generations_path)?;
    Trace::assemble(examples, records, ensemble_ids.to_vec(), target_id.to_string())
}

/// Writes a trace back out as a dataset file and a generations file.
pub fn write_trace(
    trace: &Trace,
    dataset_path: impl AsRef<Path>,
    generations_path: impl AsRef<Path>,
) -> Result<(), TraceError> {
    let mut ds = Vec::new();
    for ex in trace.examples() {
        serde_json::to_writer(&mut ds, ex).map_err(std::io::Error::from)?;
        ds.push(b'\n');
    }
    std::fs::write(dataset_path, ds)?;
    let gens: Vec<u8> = trace.records().iter().flat_map(record_line).collect();
    std::fs::write(generations_path, gens)?;
    Ok(())
}
