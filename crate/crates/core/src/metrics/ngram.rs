use std::collections::HashMap;

use super::{SimilarityScore, TokenSeq};

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    if n == 0 || tokens.len() < n {
        return counts;
    }
    for gram in tokens.windows(n) {
        *counts.entry(gram).or_insert(0) += 1;
    }
    counts
}

/// Candidate n-gram count clipped by the reference count, and the candidate total.
fn clipped_overlap(candidate: &[String], reference: &[String], n: usize) -> (usize, usize) {
    let cand = ngram_counts(candidate, n);
    let refs = ngram_counts(reference, n);
    let overlap = cand
        .iter()
        .map(|(gram, &c)| c.min(refs.get(gram).copied().unwrap_or(0)))
        .sum();
    (overlap, candidate.len().saturating_sub(n - 1))
}

/// Sentence-level BLEU.
///
/// Geometric mean of clipped n-gram precisions for orders `1..=max_n`, times
/// the brevity penalty `exp(min(0, 1 - |ref|/|cand|))`. An order whose clipped
/// count is zero is add-one smoothed on both numerator and denominator. An
/// empty candidate, or one sharing no unigram with the reference, scores 0.
///
/// # Panics
///
/// Panics if `max_n` is zero.
pub fn bleu(candidate: &TokenSeq, reference: &TokenSeq, max_n: usize) -> SimilarityScore {
    assert!(max_n >= 1, "bleu requires max_n >= 1");
    let cand = candidate.as_slice();
    let refr = reference.as_slice();
    if cand.is_empty() {
        return SimilarityScore::ZERO;
    }

    let mut log_sum = 0.0;
    for n in 1..=max_n {
        let (matched, total) = clipped_overlap(cand, refr, n);
        if n == 1 && matched == 0 {
            return SimilarityScore::ZERO;
        }
        let precision = if matched == 0 {
            1.0 / (total as f64 + 1.0)
        } else {
            matched as f64 / total as f64
        };
        log_sum += precision.ln();
    }
    let geo_mean = (log_sum / max_n as f64).exp();

    let ratio = refr.len() as f64 / cand.len() as f64;
    let brevity = (1.0 - ratio).min(0.0).exp();
    SimilarityScore::clamped_unit(geo_mean * brevity)
}

/// ROUGE-N F1 over clipped n-gram overlap. Zero when either side has no n-grams.
///
/// # Panics
///
/// Panics if `n` is zero.
pub fn rouge_n(candidate: &TokenSeq, reference: &TokenSeq, n: usize) -> SimilarityScore {
    assert!(n >= 1, "rouge_n requires n >= 1");
    let cand = candidate.as_slice();
    let refr = reference.as_slice();
    if cand.len() < n || refr.len() < n {
        return SimilarityScore::ZERO;
    }
    let (overlap, cand_total) = clipped_overlap(cand, refr, n);
    let ref_total = refr.len() - (n - 1);
    f1(overlap, cand_total, ref_total)
}

pub(crate) fn f1(overlap: usize, cand_total: usize, ref_total: usize) -> SimilarityScore {
    if overlap == 0 || cand_total == 0 || ref_total == 0 {
        return SimilarityScore::ZERO;
    }
    let precision = overlap as f64 / cand_total as f64;
    let recall = overlap as f64 / ref_total as f64;
    SimilarityScore::clamped_unit(2.0 * precision * recall / (precision + recall))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::tokenize;

    fn seq(tokens: &[&str]) -> TokenSeq {
        TokenSeq::from_tokens(tokens.iter().copied())
    }

    #[test]
    fn bleu_identity_and_disjoint() {
        let a = seq(&["a", "b", "c", "d", "e", "f"]);
        assert_eq!(bleu(&a, &a, 4).value(), 1.0);
        let short = seq(&["a", "b"]);
        assert_eq!(bleu(&short, &short, 4).value(), 1.0);
        assert_eq!(bleu(&a, &seq(&["x", "y"]), 4).value(), 0.0);
        assert_eq!(bleu(&seq(&[]), &a, 4).value(), 0.0);
    }

    #[test]
    fn bleu_hand_counted() {
        let cand = tokenize("the cat sat on a mat");
        let refr = tokenize("the cat sat on the mat");
        let expected = (5.0 / 6.0 * 3.0 / 5.0 * 2.0 / 4.0 * 1.0 / 3.0_f64).powf(0.25);
        assert!((bleu(&cand, &refr, 4).value() - expected).abs() < 1e-12);
        assert!((expected - 0.537).abs() < 1e-3);
    }

    #[test]
    fn bleu_brevity_penalty_only_for_short_candidates() {
        let refr = seq(&["a", "b", "c", "d"]);
        let cand = seq(&["a", "b"]);
        let got = bleu(&cand, &refr, 1).value();
        assert!((got - (1.0_f64 - 2.0).exp()).abs() < 1e-15);
        // longer candidate: precision drops, no penalty
        let long = seq(&["a", "b", "c", "d", "x", "y", "z", "w"]);
        assert!((bleu(&long, &refr, 1).value() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn rouge_n_hand_counted() {
        let cand = seq(&["the", "cat", "sat"]);
        let refr = seq(&["the", "cat"]);
        assert!((rouge_n(&cand, &refr, 1).value() - 0.8).abs() < 1e-15);
        assert_eq!(rouge_n(&cand, &cand, 1).value(), 1.0);
        assert_eq!(rouge_n(&seq(&["a"]), &cand, 2).value(), 0.0);
    }

    #[test]
    fn rouge_n_clips_repeats() {
        let cand = seq(&["the", "the", "the"]);
        let refr = seq(&["the", "cat"]);
        // overlap clipped to 1: P = 1/3, R = 1/2
        let expected = 2.0 * (1.0 / 3.0) * 0.5 / (1.0 / 3.0 + 0.5);
        assert!((rouge_n(&cand, &refr, 1).value() - expected).abs() < 1e-15);
    }
}
