use std::cmp::Ordering;

use serde::Serialize;

use super::EvalError;

/// Everything curve construction needs to know about one example under one policy.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExampleOutcome {
    pub example_id: String,
    /// Deferral score; lower scores are deferred first.
    pub score: f64,
    /// Quality of the output the cascade keeps when not deferring.
    pub selected_quality: f64,
    pub target_quality: f64,
    /// Summed cost of the ensemble members the policy ran.
    pub ensemble_cost: f64,
    pub target_cost: f64,
    /// Slowest member; members run in parallel.
    pub ensemble_latency_ms: f64,
    pub target_latency_ms: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CurvePoint {
    pub rate: f64,
    pub quality: f64,
    pub expected_cost: f64,
    pub expected_latency_ms: f64,
}

/// Quality, cost and latency at every deferral count `0..=N`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeferralCurve {
    pub policy_id: String,
    pub fingerprint: String,
    pub points: Vec<CurvePoint>,
    /// Mean cost of answering every query with the target alone.
    pub target_only_cost: f64,
}

impl DeferralCurve {
    /// Quality after deferring everything (the mean target quality).
    pub fn full_deferral_quality(&self) -> f64 {
        self.points.last().map(|p| p.quality).unwrap_or(0.0)
    }

    pub fn base_quality(&self) -> f64 {
        self.points.first().map(|p| p.quality).unwrap_or(0.0)
    }
}

fn check_outcome(o: &ExampleOutcome) -> Result<(), EvalError> {
    let fields = [
        o.score,
        o.selected_quality,
        o.target_quality,
        o.ensemble_cost,
        o.target_cost,
        o.ensemble_latency_ms,
        o.target_latency_ms,
    ];
    if fields.iter().any(|v| !v.is_finite()) {
        return Err(EvalError::InvalidArgument(format!(
            "non-finite outcome for example {:?}",
            o.example_id
        )));
    }
    if o.ensemble_cost < 0.0 || o.target_cost < 0.0 || o.ensemble_latency_ms < 0.0 || o.target_latency_ms < 0.0 {
        return Err(EvalError::InvalidArgument(format!(
            "negative cost or latency for example {:?}",
            o.example_id
        )));
    }
    Ok(())
}

/// Order in which examples are deferred: ascending score, ties by example id.
/// Zeros of either sign tie.
pub fn deferral_order(outcomes: &[ExampleOutcome]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..outcomes.len()).collect();
    order.sort_by(|&a, &b| {
        outcomes[a]
            .score
            .partial_cmp(&outcomes[b].score)
            .unwrap_or(Ordering::Equal)
            .then_with(|| outcomes[a].example_id.cmp(&outcomes[b].example_id))
    });
    order
}

/// Builds the curve by deferring exactly the `k` lowest-scored examples for
/// every `k` in `0..=N`.
pub fn curve_from_outcomes(
    policy_id: impl Into<String>,
    fingerprint: impl Into<String>,
    outcomes: &[ExampleOutcome],
) -> Result<DeferralCurve, EvalError> {
    if outcomes.is_empty() {
        return Err(EvalError::EmptyTrace);
    }
    for o in outcomes {
        check_outcome(o)?;
    }
    let n = outcomes.len();
    let order = deferral_order(outcomes);
    let sorted: Vec<&ExampleOutcome> = order.iter().map(|&i| &outcomes[i]).collect();

    // kept_quality[k] = sum of selected quality over sorted[k..]
    let mut kept_quality = vec![0.0; n + 1];
    for k in (0..n).rev() {
        kept_quality[k] = kept_quality[k + 1] + sorted[k].selected_quality;
    }
    let ensemble_cost: f64 = sorted.iter().map(|o| o.ensemble_cost).sum();
    let ensemble_latency: f64 = sorted.iter().map(|o| o.ensemble_latency_ms).sum();

    let nf = n as f64;
    let mut points = Vec::with_capacity(n + 1);
    let (mut deferred_quality, mut deferred_cost, mut deferred_latency) = (0.0, 0.0, 0.0);
    for k in 0..=n {
        if k > 0 {
            let o = sorted[k - 1];
            deferred_quality += o.target_quality;
            deferred_cost += o.target_cost;
            deferred_latency += o.target_latency_ms;
        }
        points.push(CurvePoint {
            rate: k as f64 / nf,
            quality: (deferred_quality + kept_quality[k]) / nf,
            expected_cost: (ensemble_cost + deferred_cost) / nf,
            expected_latency_ms: (ensemble_latency + deferred_latency) / nf,
        });
    }
    let target_only_cost = sorted.iter().map(|o| o.target_cost).sum::<f64>() / nf;
    Ok(DeferralCurve {
        policy_id: policy_id.into(),
        fingerprint: fingerprint.into(),
        points,
        target_only_cost,
    })
}

/// Area under the deferral curve by the trapezoidal rule over `r in [0, 1]`.
pub fn auc_df(curve: &DeferralCurve) -> f64 {
    curve
        .points
        .windows(2)
        .map(|w| (w[1].rate - w[0].rate) * (w[0].quality + w[1].quality) / 2.0)
        .sum()
}

/// Expected AUC-DF of uniformly random deferral: the straight line from the
/// base quality to the target quality.
pub fn random_baseline_auc(base_quality: f64, target_quality: f64) -> f64 {
    (base_quality + target_quality) / 2.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BudgetPoint {
    pub budget: f64,
    pub rate: f64,
    pub quality: f64,
}

/// Quality reachable when the expected per-query cost may be at most
/// `fraction` of the target-only cost. Linear interpolation between points.
pub fn quality_at_budget(curve: &DeferralCurve, fraction: f64) -> Result<BudgetPoint, EvalError> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(EvalError::InvalidArgument(format!(
            "budget fraction {fraction} outside (0, 1]"
        )));
    }
    let pts = &curve.points;
    let first = pts.first().ok_or(EvalError::EmptyTrace)?;
    let budget = fraction * curve.target_only_cost;
    if first.expected_cost > budget {
        return Err(EvalError::BudgetInfeasible {
            budget,
            ensemble_cost: first.expected_cost,
        });
    }
    let last = pts.last().expect("non-empty");
    if budget >= last.expected_cost {
        return Ok(BudgetPoint {
            budget,
            rate: last.rate,
            quality: last.quality,
        });
    }
    let k = pts
        .iter()
        .position(|p| p.expected_cost >= budget)
        .expect("budget lies below the last point");
    if k == 0 || pts[k].expected_cost == budget {
        return Ok(BudgetPoint {
            budget,
            rate: pts[k].rate,
            quality: pts[k].quality,
        });
    }
    let (a, b) = (&pts[k - 1], &pts[k]);
    let t = (budget - a.expected_cost) / (b.expected_cost - a.expected_cost);
    Ok(BudgetPoint {
        budget,
        rate: a.rate + t * (b.rate - a.rate),
        quality: a.quality + t * (b.quality - a.quality),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LatencyPoint {
    pub rate: f64,
    pub quality: f64,
    pub latency_ms: f64,
}

/// Expected latency at the smallest deferral rate whose quality reaches
/// `theta * target_quality`.
pub fn latency_at_quality(
    curve: &DeferralCurve,
    target_quality: f64,
    theta: f64,
) -> Result<LatencyPoint, EvalError> {
    if !(theta > 0.0 && theta <= 1.0) {
        return Err(EvalError::InvalidArgument(format!("quality fraction {theta} outside (0, 1]")));
    }
    let required = theta * target_quality;
    curve
        .points
        .iter()
        .find(|p| p.quality >= required)
        .map(|p| LatencyPoint {
            rate: p.rate,
            quality: p.quality,
            latency_ms: p.expected_latency_ms,
        })
        .ok_or_else(|| EvalError::ThresholdUnreachable {
            required,
            max_quality: curve.points.iter().map(|p| p.quality).fold(f64::NEG_INFINITY, f64::max),
        })
}
