use crate::confidence::sorted_quantile;
use crate::eval::{policy_decisions, EvalContext};
use crate::policy::PolicyConfig;
use crate::trace::Trace;

use super::GatewayError;

/// Threshold that defers about `rate` of the given scores under the strict
/// `score < threshold` rule.
///
/// The threshold is the linearly interpolated `rate`-quantile of the scores.
/// `rate = 0` gives the minimum (nothing deferred). `rate = 1` gives the next
/// float above the maximum, so every score is deferred.
pub fn threshold_for_rate(scores: &[f64], rate: f64) -> Result<f64, GatewayError> {
    if scores.is_empty() {
        return Err(GatewayError::EmptyTrace);
    }
    if !(0.0..=1.0).contains(&rate) {
        return Err(GatewayError::InvalidArgument(format!("deferral rate {rate} outside [0, 1]")));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(GatewayError::InvalidArgument("non-finite deferral score".into()));
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    if rate == 1.0 {
        return Ok(sorted[sorted.len() - 1].next_up());
    }
    Ok(sorted_quantile(&sorted, rate))
}

/// Operating threshold for `policy` so that about `rate` of the trace defers.
pub fn calibrate_threshold(
    trace: &Trace,
    policy: &PolicyConfig,
    ctx: &EvalContext<'_>,
    rate: f64,
) -> Result<f64, GatewayError> {
    if trace.is_empty() {
        return Err(GatewayError::EmptyTrace);
    }
    let scores: Vec<f64> = policy_decisions(trace, policy, ctx)?
        .into_iter()
        .map(|(d, _)| d.deferral_score)
        .collect();
    threshold_for_rate(&scores, rate)
}
