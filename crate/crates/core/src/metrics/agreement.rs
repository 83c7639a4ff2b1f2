use serde::Serialize;

use super::{cosine_similarity, tokenize, Metric, MetricError, SimilarityScore, TokenSeq};

/// Symmetric `n x n` pairwise similarity among ensemble outputs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AgreementMatrix {
    n: usize,
    cells: Vec<f64>,
}

impl AgreementMatrix {
    /// Builds a matrix from a possibly directional pairwise function.
    ///
    /// Off-diagonal cells hold `(sim(i, j) + sim(j, i)) / 2`; the diagonal
    /// holds `sim(i, i)`. This is also the entry point for externally
    /// computed pair scores (e.g. a learned pair metric behind an endpoint).
    pub fn from_pairwise<F>(n: usize, mut sim: F) -> Self
    where
        F: FnMut(usize, usize) -> f64,
    {
        let mut cells = vec![0.0; n * n];
        for i in 0..n {
            cells[i * n + i] = sim(i, i);
            for j in (i + 1)..n {
                let v = (sim(i, j) + sim(j, i)) / 2.0;
                cells[i * n + j] = v;
                cells[j * n + i] = v;
            }
        }
        AgreementMatrix { n, cells }
    }

    /// Builds a matrix from explicit rows, checking shape, symmetry and finiteness.
    pub fn from_rows(rows: &[Vec<f64>]) -> Option<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return None;
        }
        let cells: Vec<f64> = rows.iter().flatten().copied().collect();
        let m = AgreementMatrix { n, cells };
        let ok = (0..n).all(|i| (0..n).all(|j| m.get(i, j).is_finite() && m.get(i, j) == m.get(j, i)));
        ok.then_some(m)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.cells[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.cells[i * self.n..(i + 1) * self.n]
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.n).map(|i| self.row(i).to_vec()).collect()
    }
}

/// One consensus score per ensemble output.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct OutputScores(pub Vec<f64>);

impl OutputScores {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Pairwise agreement among `outputs` under `metric`.
///
/// `embeddings` must be supplied (one vector per output) exactly when the
/// metric is embedding cosine.
pub fn agreement_matrix<S: AsRef<str>>(
    outputs: &[S],
    metric: Metric,
    embeddings: Option<&[Vec<f64>]>,
) -> Result<AgreementMatrix, MetricError> {
    let n = outputs.len();
    if n < 2 {
        return Err(MetricError::FewerThanTwoOutputs(n));
    }

    if metric.needs_embeddings() {
        let vecs = embeddings
            .ok_or_else(|| MetricError::MissingEmbeddings("no vectors were supplied".into()))?;
        if vecs.len() != n {
            return Err(MetricError::MissingEmbeddings(format!(
                "{} vectors supplied for {} outputs",
                vecs.len(),
                n
            )));
        }
        let mut pair = vec![0.0; n * n];
        for i in 0..n {
            for j in i..n {
                let v = cosine_similarity(&vecs[i], &vecs[j])?.value();
                pair[i * n + j] = v;
                pair[j * n + i] = v;
            }
        }
        return Ok(AgreementMatrix::from_pairwise(n, |i, j| pair[i * n + j]));
    }

    let tokens: Vec<TokenSeq> = outputs.iter().map(|t| tokenize(t.as_ref())).collect();
    Ok(AgreementMatrix::from_pairwise(n, |i, j| {
        metric
            .score_tokens(&tokens[i], &tokens[j])
            .map(SimilarityScore::value)
            .unwrap_or(0.0)
    }))
}

/// Mean similarity of each output to every *other* output (diagonal excluded).
///
/// Each row is summed in ascending value order, so the result for a given
/// output does not depend on where the other outputs sit in the list.
pub fn mean_pairwise_scores(m: &AgreementMatrix) -> OutputScores {
    let n = m.n();
    if n < 2 {
        return OutputScores(vec![0.0; n]);
    }
    let scores = (0..n)
        .map(|i| {
            let mut others: Vec<f64> = m
                .row(i)
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, &v)| v)
                .collect();
            others.sort_by(f64::total_cmp);
            others.iter().sum::<f64>() / (n - 1) as f64
        })
        .collect();
    OutputScores(scores)
}
