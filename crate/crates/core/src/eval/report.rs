use std::fs::File;
use std::path::Path;

use serde::Serialize;

use super::{auc_df, latency_at_quality, quality_at_budget, random_baseline_auc, DeferralCurve, EvalError};

pub const CURVES_FILE: &str = "curves.csv";
pub const SUMMARY_FILE: &str = "summary.csv";

/// One row of the summary table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PolicySummary {
    pub policy_id: String,
    pub auc_df: f64,
    /// Empty when the budget is infeasible for this policy or costs are unknown.
    pub quality_at_budget: Option<f64>,
    /// Empty when the quality threshold is never reached.
    pub latency_at_quality: Option<f64>,
    pub random_auc: f64,
}

/// Summary of one curve at a budget fraction and a quality fraction of the
/// curve's own full-deferral quality.
pub fn summarize(curve: &DeferralCurve, budget_fraction: f64, quality_fraction: f64) -> PolicySummary {
    PolicySummary {
        policy_id: curve.policy_id.clone(),
        auc_df: auc_df(curve),
        quality_at_budget: (curve.target_only_cost > 0.0)
            .then(|| quality_at_budget(curve, budget_fraction).ok().map(|b| b.quality))
            .flatten(),
        latency_at_quality: latency_at_quality(curve, curve.full_deferral_quality(), quality_fraction)
            .ok()
            .map(|p| p.latency_ms),
        random_auc: random_baseline_auc(curve.base_quality(), curve.full_deferral_quality()),
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Writes `curves.csv` and `summary.csv` into `dir`, rows in input order.
pub fn emit_report(
    curves: &[DeferralCurve],
    summaries: &[PolicySummary],
    dir: impl AsRef<Path>,
) -> Result<(), EvalError> {
    if let Some(first) = curves.first() {
        if let Some(other) = curves.iter().find(|c| c.fingerprint != first.fingerprint) {
            return Err(EvalError::FingerprintMismatch(
                first.fingerprint.clone(),
                other.fingerprint.clone(),
            ));
        }
    }
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;

    let mut w = csv::Writer::from_writer(File::create(dir.join(CURVES_FILE))?);
    w.write_record(["policy_id", "r", "quality", "cost", "latency_ms"])?;
    for c in curves {
        for p in &c.points {
            w.write_record([
                c.policy_id.clone(),
                p.rate.to_string(),
                p.quality.to_string(),
                p.expected_cost.to_string(),
                p.expected_latency_ms.to_string(),
            ])?;
        }
    }
    w.flush()?;

    let mut w = csv::Writer::from_writer(File::create(dir.join(SUMMARY_FILE))?);
    w.write_record([
        "policy_id",
        "auc_df",
        "quality_at_budget",
        "latency_at_quality",
        "random_auc",
    ])?;
    for s in summaries {
        w.write_record([
            s.policy_id.clone(),
            s.auc_df.to_string(),
            fmt_opt(s.quality_at_budget),
            fmt_opt(s.latency_at_quality),
            s.random_auc.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::{curve_from_outcomes, ExampleOutcome};

    fn curve(fp: &str) -> DeferralCurve {
        let o = |id: &str, s, q| ExampleOutcome {
            example_id: id.into(),
            score: s,
            selected_quality: q,
            target_quality: 1.0,
            ensemble_cost: 10.0,
            target_cost: 100.0,
            ensemble_latency_ms: 30.0,
            target_latency_ms: 400.0,
        };
        curve_from_outcomes("sem,rouge", fp, &[o("a", 0.9, 1.0), o("b", 0.1, 0.0)]).unwrap()
    }

    #[test]
    fn writes_header_and_rows() {
        let dir = tempfile::tempdir().unwrap();
        let c = curve("f");
        let s = summarize(&c, 0.4, 0.98);
        emit_report(&[c], std::slice::from_ref(&s), dir.path()).unwrap();
        let curves = std::fs::read_to_string(dir.path().join(CURVES_FILE)).unwrap();
        assert_eq!(curves.lines().count(), 4);
        assert!(curves.starts_with("policy_id,r,quality,cost,latency_ms\n\"sem,rouge\",0,0.5,10,30\n"));
        let summary = std::fs::read_to_string(dir.path().join(SUMMARY_FILE)).unwrap();
        assert_eq!(summary.lines().count(), 2);
        assert_eq!(s.auc_df, 0.875);
        assert_eq!(s.random_auc, 0.75);
    }

    #[test]
    fn reports_are_byte_identical() {
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        for d in [&a, &b] {
            let c = curve("f");
            let s = summarize(&c, 0.4, 0.98);
            emit_report(&[c], &[s], d.path()).unwrap();
        }
        for f in [CURVES_FILE, SUMMARY_FILE] {
            assert_eq!(
                std::fs::read(a.path().join(f)).unwrap(),
                std::fs::read(b.path().join(f)).unwrap()
            );
        }
    }

    #[test]
    fn mixed_fingerprints_rejected() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            emit_report(&[curve("x"), curve("y")], &[], dir.path()),
            Err(EvalError::FingerprintMismatch(..))
        ));
    }
}
