//! E-values and rank p-values for a single exchangeable block.
//!
//! The e-value compares the test score with the *average* of all `n + 1`
//! scores:
//!
//! ```text
//! E = S_{n+1} / ((S_1 + ... + S_n + S_{n+1}) / (n + 1))
//! ```
//!
//! Averaging `E` over which of the `n + 1` exchangeable scores plays the test
//! point gives exactly 1, so `E[E] = 1` under exchangeability and Markov's
//! inequality yields `P(E < 1/alpha) >= 1 - alpha`. Because `s -> E(s)` is an
//! increasing Möbius map, the set `{ s : E(s) < 1/alpha }` inverts in closed
//! form (see [`e_set_threshold`]).

use serde::{Deserialize, Serialize};

use crate::error::{check_alpha, domain, Result};
use crate::scores::{LabelScoreRow, ScoreVector};
use crate::threshold::Threshold;

/// A nonnegative, finite e-value.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EValue(f64);

impl EValue {
    pub const ONE: EValue = EValue(1.0);

    pub fn new(value: f64) -> Result<Self> {
        if value >= 0.0 && value.is_finite() {
            Ok(EValue(value))
        } else {
            Err(domain(format!("e-value must be nonnegative and finite, got {value}")))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

/// A p-value in `(0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PValue(f64);

impl PValue {
    pub fn new(value: f64) -> Result<Self> {
        if value > 0.0 && value <= 1.0 {
            Ok(PValue(value))
        } else {
            Err(domain(format!("p-value must lie in (0, 1], got {value}")))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

fn check_test_score(test_score: f64) -> Result<()> {
    if test_score > 0.0 && test_score.is_finite() {
        Ok(())
    } else {
        Err(domain(format!("test score must be positive and finite, got {test_score}")))
    }
}

/// E-value of `test_score` against a calibration block whose scores sum to
/// `calib_sum` over `n` entries. Exactly 1 when `n == 0`.
#[inline]
pub(crate) fn e_value_from_sum(test_score: f64, calib_sum: f64, n: usize) -> f64 {
    if n == 0 {
        return 1.0;
    }
    test_score * (n as f64 + 1.0) / (calib_sum + test_score)
}

/// The conformal e-value of `test_score` against `calib`.
///
/// ```
/// use econformal::evalue::e_value;
/// use econformal::scores::ScoreVector;
///
/// let calib = ScoreVector::new(vec![1.0, 2.0, 3.0]).unwrap();
/// assert_eq!(e_value(4.0, &calib).unwrap().get(), 1.6);
/// ```
pub fn e_value(test_score: f64, calib: &ScoreVector) -> Result<EValue> {
    check_test_score(test_score)?;
    EValue::new(e_value_from_sum(test_score, calib.sum(), calib.len()))
}

/// Rank p-value `(#{i : S_i > test} + 1) / (n + 1)`.
///
/// Ties count against the test point (strict `>`), with no randomized
/// tie-breaking, so the p-value is conservative when scores repeat.
pub fn p_value_rank(test_score: f64, calib: &ScoreVector) -> Result<PValue> {
    check_test_score(test_score)?;
    let above = calib.values().iter().filter(|s| **s > test_score).count();
    PValue::new((above as f64 + 1.0) / (calib.len() as f64 + 1.0))
}

/// Arithmetic mean of e-values, which is again an e-value.
pub fn mean_e(values: &[EValue]) -> Result<EValue> {
    if values.is_empty() {
        return Err(domain("cannot average an empty list of e-values"));
    }
    let total: f64 = values.iter().map(|e| e.0).sum();
    EValue::new(total / values.len() as f64)
}

/// Threshold `t` such that the fixed-level e-set is exactly `{ s : s < t }`.
///
/// Solving `s (n+1) / (Σ + s) < 1/alpha` for `s` gives
/// `s < Σ / ((n+1) alpha - 1)` when `(n+1) alpha > 1`; otherwise every score
/// qualifies.
pub fn e_set_threshold(calib: &ScoreVector, alpha: f64) -> Result<Threshold> {
    check_alpha(alpha)?;
    if calib.is_empty() {
        return Err(domain("calibration set must be nonempty"));
    }
    Ok(threshold_from_sum(calib.sum(), calib.len(), alpha))
}

#[inline]
pub(crate) fn threshold_from_sum(calib_sum: f64, n: usize, alpha: f64) -> Threshold {
    let k = (n as f64 + 1.0) * alpha;
    if k <= 1.0 {
        Threshold::Unbounded
    } else {
        Threshold::Below(calib_sum / (k - 1.0))
    }
}

/// Labels whose candidate score lies inside `threshold`, ascending.
pub fn label_set_from_threshold(row: &LabelScoreRow, threshold: Threshold) -> Vec<usize> {
    threshold.select(row.values())
}
