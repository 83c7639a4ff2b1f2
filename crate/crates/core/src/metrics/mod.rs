//! Text similarity primitives and their aggregation into per-output
//! agreement scores.
//!
//! N-gram metrics (BLEU, ROUGE-N, ROUGE-L) are computed natively on
//! [`TokenSeq`]s. Embedding cosine consumes vectors obtained elsewhere
//! (see [`crate::clients::ModelClient::embed`]).

mod agreement;
mod lcs;
mod ngram;
mod tokenize;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use agreement::{agreement_matrix, mean_pairwise_scores, AgreementMatrix, OutputScores};
pub use lcs::{lcs_len, rouge_l};
pub use ngram::{bleu, rouge_n};
pub use tokenize::{tokenize, tokenize_with, TokenSeq, TokenizerOptions};

/// Maximum n-gram order used wherever BLEU is selected by name.
pub const BLEU_MAX_N: usize = 4;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum MetricError {
    #[error("vector dimensions differ: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("cosine similarity is undefined for a zero-norm or empty vector")]
    ZeroNormVector,
    #[error("agreement needs at least two outputs, got {0}")]
    FewerThanTwoOutputs(usize),
    #[error("embedding metric selected but {0}")]
    MissingEmbeddings(String),
    #[error("unknown metric {0:?}")]
    UnknownMetric(String),
}

/// A finite similarity value.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SimilarityScore(f64);

impl SimilarityScore {
    pub const ZERO: SimilarityScore = SimilarityScore(0.0);

    pub fn value(self) -> f64 {
        self.0
    }

    pub(crate) fn clamped_unit(v: f64) -> Self {
        SimilarityScore(v.clamp(0.0, 1.0))
    }
}

impl From<SimilarityScore> for f64 {
    fn from(s: SimilarityScore) -> f64 {
        s.0
    }
}

/// Pairwise similarity used to compare ensemble outputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Bleu,
    #[serde(rename = "rouge_1")]
    Rouge1,
    #[serde(rename = "rouge_2")]
    Rouge2,
    #[serde(rename = "rouge_l")]
    RougeL,
    EmbeddingCosine,
}

impl Metric {
    pub fn as_str(self) -> &'static str {
        match self {
            Metric::Bleu => "bleu",
            Metric::Rouge1 => "rouge_1",
            Metric::Rouge2 => "rouge_2",
            Metric::RougeL => "rouge_l",
            Metric::EmbeddingCosine => "embedding_cosine",
        }
    }

    pub fn needs_embeddings(self) -> bool {
        self == Metric::EmbeddingCosine
    }

    /// Similarity of `candidate` against `reference` for the token metrics.
    /// Returns `None` for [`Metric::EmbeddingCosine`].
    pub fn score_tokens(self, candidate: &TokenSeq, reference: &TokenSeq) -> Option<SimilarityScore> {
        Some(match self {
            Metric::Bleu => bleu(candidate, reference, BLEU_MAX_N),
            Metric::Rouge1 => rouge_n(candidate, reference, 1),
            Metric::Rouge2 => rouge_n(candidate, reference, 2),
            Metric::RougeL => rouge_l(candidate, reference),
            Metric::EmbeddingCosine => return None,
        })
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Metric {
    type Err = MetricError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "bleu" => Ok(Metric::Bleu),
            "rouge_1" | "rouge1" => Ok(Metric::Rouge1),
            "rouge_2" | "rouge2" => Ok(Metric::Rouge2),
            "rouge_l" | "rougeL" => Ok(Metric::RougeL),
            "embedding_cosine" | "cosine" => Ok(Metric::EmbeddingCosine),
            other => Err(MetricError::UnknownMetric(other.to_string())),
        }
    }
}

/// `dot(a, b) / (|a| |b|)`, clamped to `[-1, 1]` against rounding drift.
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<SimilarityScore, MetricError> {
    if a.len() != b.len() {
        return Err(MetricError::DimensionMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    let (dot, na, nb) = a
        .iter()
        .zip(b)
        .fold((0.0, 0.0, 0.0), |(d, x, y), (&p, &q)| (d + p * q, x + p * p, y + q * q));
    let denom = (na * nb).sqrt();
    if a.is_empty() || denom == 0.0 || !denom.is_finite() {
        return Err(MetricError::ZeroNormVector);
    }
    let value = dot / denom;
    if !value.is_finite() {
        return Err(MetricError::ZeroNormVector);
    }
    Ok(SimilarityScore(value.clamp(-1.0, 1.0)))
}
