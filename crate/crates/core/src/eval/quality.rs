use serde::Serialize;
use unicode_normalization::UnicodeNormalization;

use crate::metrics::{bleu, rouge_l, tokenize, BLEU_MAX_N};
use crate::trace::{DatasetExample, TaskMetric};

/// Reference-based quality in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize)]
#[serde(transparent)]
pub struct QualityScore(f64);

impl QualityScore {
    pub fn value(self) -> f64 {
        self.0
    }
}

const ARTICLES: [&str; 3] = ["a", "an", "the"];

/// QA answer normalization: lowercase, strip punctuation, collapse
/// whitespace, drop one leading article.
pub fn normalize_answer(text: &str) -> String {
    let lowered: String = text.nfc().collect::<String>().to_lowercase();
    let stripped: String = lowered
        .chars()
        .filter(|c| c.is_alphanumeric() || c.is_whitespace())
        .collect();
    let mut words: Vec<&str> = stripped.split_whitespace().collect();
    if words.len() > 1 && ARTICLES.contains(&words[0]) {
        words.remove(0);
    }
    words.join(" ")
}

/// Scores `prediction` against the example's references with its task metric.
/// Multi-reference examples take the best match.
pub fn quality_score(prediction: &str, example: &DatasetExample) -> QualityScore {
    let value = match example.task_metric {
        TaskMetric::ExactMatch => {
            let pred = normalize_answer(prediction);
            let hit = example.references.iter().any(|r| normalize_answer(r) == pred);
            if hit {
                1.0
            } else {
                0.0
            }
        }
        TaskMetric::RougeL | TaskMetric::Bleu => {
            let pred = tokenize(prediction);
            example
                .references
                .iter()
                .map(|r| {
                    let refr = tokenize(r);
                    match example.task_metric {
                        TaskMetric::RougeL => rouge_l(&pred, &refr).value(),
                        _ => bleu(&pred, &refr, BLEU_MAX_N).value(),
                    }
                })
                .fold(0.0, f64::max)
        }
    };
    QualityScore(value)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn example(metric: TaskMetric, refs: &[&str]) -> DatasetExample {
        DatasetExample {
            id: "x".into(),
            prompt: String::new(),
            references: refs.iter().map(|s| s.to_string()).collect(),
            task_metric: metric,
        }
    }

    #[test]
    fn exact_match_normalizes() {
        let ex = example(TaskMetric::ExactMatch, &["Eiffel Tower"]);
        assert_eq!(quality_score("The Eiffel Tower", &ex).value(), 1.0);
        assert_eq!(quality_score("  eiffel   tower. ", &ex).value(), 1.0);
        assert_eq!(quality_score("Louvre", &ex).value(), 0.0);
        let aliases = example(TaskMetric::ExactMatch, &["NYC", "New York City"]);
        assert_eq!(quality_score("new york city!", &aliases).value(), 1.0);
    }

    #[test]
    fn lone_article_is_kept() {
        assert_eq!(normalize_answer("The"), "the");
        assert_eq!(normalize_answer("An apple a day"), "apple a day");
    }

    #[test]
    fn overlap_metrics_take_best_reference() {
        let ex = example(TaskMetric::RougeL, &["completely different", "the cat sat"]);
        assert_eq!(quality_score("the cat sat", &ex).value(), 1.0);
        assert_eq!(quality_score("zebra", &ex).value(), 0.0);
        let ex = example(TaskMetric::Bleu, &["le chat est noir"]);
        assert_eq!(quality_score("Le chat est noir", &ex).value(), 1.0);
    }
}
