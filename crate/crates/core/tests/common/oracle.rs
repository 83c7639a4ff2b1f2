//! Slow, obviously-correct reference implementations.

use std::collections::HashMap;

use semcascade::eval::{CurvePoint, ExampleOutcome};

fn ngrams(t: &[String], n: usize) -> Vec<&[String]> {
    if t.len() < n {
        return Vec::new();
    }
    (0..=t.len() - n).map(|i| &t[i..i + n]).collect()
}

fn count(hay: &[&[String]], needle: &[String]) -> usize {
    hay.iter().filter(|g| **g == needle).count()
}

/// Clipped overlap by linear scans over n-gram lists.
fn clipped(cand: &[String], refr: &[String], n: usize) -> (usize, usize) {
    let c = ngrams(cand, n);
    let r = ngrams(refr, n);
    let mut seen: Vec<&[String]> = Vec::new();
    let mut overlap = 0;
    for g in &c {
        if seen.contains(g) {
            continue;
        }
        seen.push(g);
        overlap += count(&c, g).min(count(&r, g));
    }
    (overlap, c.len())
}

pub fn bleu(cand: &[String], refr: &[String], max_n: usize) -> f64 {
    if cand.is_empty() || clipped(cand, refr, 1).0 == 0 {
        return 0.0;
    }
    let mut logs = Vec::new();
    for n in 1..=max_n {
        let (m, t) = clipped(cand, refr, n);
        let p = if m == 0 {
            (m as f64 + 1.0) / (t as f64 + 1.0)
        } else {
            m as f64 / t as f64
        };
        logs.push(p.ln());
    }
    let geo = (logs.iter().sum::<f64>() / max_n as f64).exp();
    let bp = if cand.len() >= refr.len() {
        1.0
    } else {
        (1.0 - refr.len() as f64 / cand.len() as f64).exp()
    };
    geo * bp
}

fn f1(overlap: usize, c: usize, r: usize) -> f64 {
    if overlap == 0 || c == 0 || r == 0 {
        return 0.0;
    }
    let p = overlap as f64 / c as f64;
    let rc = overlap as f64 / r as f64;
    2.0 * p * rc / (p + rc)
}

pub fn rouge_n(cand: &[String], refr: &[String], n: usize) -> f64 {
    let (m, c) = clipped(cand, refr, n);
    f1(m, c, ngrams(refr, n).len())
}

/// LCS length by memoized recursion.
pub fn lcs(a: &[String], b: &[String]) -> usize {
    fn go(a: &[String], b: &[String], i: usize, j: usize, memo: &mut HashMap<(usize, usize), usize>) -> usize {
        if i == a.len() || j == b.len() {
            return 0;
        }
        if let Some(&v) = memo.get(&(i, j)) {
            return v;
        }
        let v = if a[i] == b[j] {
            1 + go(a, b, i + 1, j + 1, memo)
        } else {
            go(a, b, i + 1, j, memo).max(go(a, b, i, j + 1, memo))
        };
        memo.insert((i, j), v);
        v
    }
    go(a, b, 0, 0, &mut HashMap::new())
}

pub fn rouge_l(cand: &[String], refr: &[String]) -> f64 {
    f1(lcs(cand, refr), cand.len(), refr.len())
}

/// Sort, then interpolate between order statistics at `q (n - 1)`.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let h = q * (v.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(v.len() - 1);
    v[lo] + (h - lo as f64) * (v[hi] - v[lo])
}

/// Curve by direct enumeration: for each k, defer the k lowest-scored
/// examples (ties by id) and average over all examples.
pub fn curve_points(outcomes: &[ExampleOutcome]) -> Vec<CurvePoint> {
    let n = outcomes.len();
    let mut ranked: Vec<&ExampleOutcome> = outcomes.iter().collect();
    ranked.sort_by(|a, b| {
        a.score
            .partial_cmp(&b.score)
            .unwrap()
            .then_with(|| a.example_id.cmp(&b.example_id))
    });
    (0..=n)
        .map(|k| {
            let (mut q, mut c, mut l) = (0.0, 0.0, 0.0);
            for (i, o) in ranked.iter().enumerate() {
                let deferred = i < k;
                q += if deferred { o.target_quality } else { o.selected_quality };
                c += o.ensemble_cost + if deferred { o.target_cost } else { 0.0 };
                l += o.ensemble_latency_ms + if deferred { o.target_latency_ms } else { 0.0 };
            }
            CurvePoint {
                rate: k as f64 / n as f64,
                quality: q / n as f64,
                expected_cost: c / n as f64,
                expected_latency_ms: l / n as f64,
            }
        })
        .collect()
}

pub fn trapezoid(points: &[CurvePoint]) -> f64 {
    let mut area = 0.0;
    for k in 1..points.len() {
        let (a, b) = (&points[k - 1], &points[k]);
        area += (b.rate - a.rate) * (a.quality + b.quality) / 2.0;
    }
    area
}
