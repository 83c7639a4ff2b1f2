use super::ngram::f1;
use super::{SimilarityScore, TokenSeq};

/// Length of the longest common subsequence, two-row dynamic programme.
pub fn lcs_len(a: &[String], b: &[String]) -> usize {
    if a.is_empty() || b.is_empty() {
        return 0;
    }
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y {
                prev[j] + 1
            } else {
                prev[j + 1].max(cur[j])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// ROUGE-L F1 with `P = LCS/|cand|`, `R = LCS/|ref|`.
pub fn rouge_l(candidate: &TokenSeq, reference: &TokenSeq) -> SimilarityScore {
    let lcs = lcs_len(candidate.as_slice(), reference.as_slice());
    f1(lcs, candidate.len(), reference.len())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq(tokens: &[&str]) -> TokenSeq {
        TokenSeq::from_tokens(tokens.iter().copied())
    }

    #[test]
    fn hand_computed_lcs() {
        let cand = seq(&["the", "cat", "sat"]);
        let refr = seq(&["cat", "sat", "down"]);
        assert_eq!(lcs_len(cand.as_slice(), refr.as_slice()), 2);
        assert!((rouge_l(&cand, &refr).value() - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn identity_disjoint_empty() {
        let a = seq(&["x", "y", "z"]);
        assert_eq!(rouge_l(&a, &a).value(), 1.0);
        assert_eq!(rouge_l(&a, &seq(&["p", "q"])).value(), 0.0);
        assert_eq!(rouge_l(&a, &seq(&[])).value(), 0.0);
        assert_eq!(rouge_l(&seq(&[]), &seq(&[])).value(), 0.0);
    }
}
