//! Split conformal p-prediction, the classical baseline.
//!
//! The set keeps every candidate whose score is at most the
//! `⌈(1-α)(n+1)⌉`-th smallest calibration score, with that order statistic
//! taken as `+∞` once the rank exceeds `n`. Coverage is at least `1 - α`, and
//! at most `1 - α + 1/(n+1)` when scores have no ties.

use crate::error::{check_alpha, domain, Result};
use crate::scores::{LabelScoreRow, ScoreVector};
use crate::threshold::{ceil_tol, Threshold};

/// Rank `⌈(1-α)(n+1)⌉` of the calibration order statistic used as threshold.
pub fn conformal_rank(n: usize, alpha: f64) -> usize {
    ceil_tol((1.0 - alpha) * (n as f64 + 1.0)) as usize
}

/// `k`-th smallest (1-based) of `values`, by selection on a copy.
pub(crate) fn kth_smallest(values: &[f64], k: usize) -> f64 {
    debug_assert!(k >= 1 && k <= values.len());
    let mut buf = values.to_vec();
    let (_, kth, _) = buf.select_nth_unstable_by(k - 1, f64::total_cmp);
    *kth
}

/// Inclusive threshold of the split conformal set.
pub fn p_conformal_threshold(calib: &ScoreVector, alpha: f64) -> Result<Threshold> {
    check_alpha(alpha)?;
    if calib.is_empty() {
        return Err(domain("calibration set must be nonempty"));
    }
    let k = conformal_rank(calib.len(), alpha);
    if k > calib.len() {
        return Ok(Threshold::Unbounded);
    }
    Ok(Threshold::AtMost(kth_smallest(calib.values(), k)))
}

/// Labels `y` with `row[y] <= p_conformal_threshold(calib, alpha)`.
pub fn p_conformal_set(row: &LabelScoreRow, calib: &ScoreVector, alpha: f64) -> Result<Vec<usize>> {
    Ok(p_conformal_threshold(calib, alpha)?.select(row.values()))
}
