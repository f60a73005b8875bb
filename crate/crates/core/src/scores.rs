//! Nonconformity score transforms and validation.
//!
//! Everything downstream assumes *negatively oriented*, strictly positive
//! scores: smaller means the label conforms better. The transforms here turn
//! model probabilities (or any positively oriented score) into that form, and
//! [`ScoreVector`] / [`LabelScoreRow`] enforce positivity at construction.
//! Invalid entries are rejected, never clamped.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};

/// Default exponent for [`inverse_power_score`].
pub const DEFAULT_EXPONENT: f64 = 0.25;

/// Default offset for [`positive_orientation`].
pub const DEFAULT_EPSILON: f64 = 1e-6;

/// Offset added by [`positivity_guard`].
pub const POSITIVITY_GUARD: f64 = 1e-12;

/// Cross-entropy score `-ln(prob)`.
///
/// Returns exactly `0.0` for `prob == 1`; pass the result through
/// [`positivity_guard`] if it feeds an e-value.
pub fn cross_entropy_score(prob: f64) -> Result<f64> {
    check_prob(prob)?;
    // -ln(1) is -0.0; normalise the sign
    Ok(-prob.ln() + 0.0)
}

/// Inverse power score `1 / prob^exponent`.
///
/// With the default exponent of 1/4 low-confidence labels get amplified
/// scores while the martingale built on them does not collapse as fast as
/// with plain `1 / prob`.
pub fn inverse_power_score(prob: f64, exponent: f64) -> Result<f64> {
    check_prob(prob)?;
    if !(exponent > 0.0 && exponent.is_finite()) {
        return Err(domain(format!("exponent must be positive and finite, got {exponent}")));
    }
    Ok(prob.powf(-exponent))
}

/// Converts a nonnegative, positively oriented score into a negatively
/// oriented one: `1 / (pos_score + epsilon)`. The output lies in `(0, 1/epsilon]`.
pub fn positive_orientation(pos_score: f64, epsilon: f64) -> Result<f64> {
    if !(pos_score >= 0.0 && pos_score.is_finite()) {
        return Err(domain(format!("score must be nonnegative and finite, got {pos_score}")));
    }
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(domain(format!("epsilon must be positive, got {epsilon}")));
    }
    Ok(1.0 / (pos_score + epsilon))
}

/// Shifts a nonnegative score by [`POSITIVITY_GUARD`] so it is strictly positive.
pub fn positivity_guard(score: f64) -> f64 {
    score + POSITIVITY_GUARD
}

fn check_prob(prob: f64) -> Result<()> {
    if prob > 0.0 && prob <= 1.0 {
        Ok(())
    } else {
        Err(domain(format!("probability must lie in (0, 1], got {prob}")))
    }
}

fn check_positive(values: &[f64]) -> Result<()> {
    match values.iter().position(|v| !(*v > 0.0 && v.is_finite())) {
        Some(index) => Err(Error::InvalidScore { index, value: values[index] }),
        None => Ok(()),
    }
}

/// Validates raw scores; see [`ScoreVector::new`].
pub fn validate_scores(raw: &[f64]) -> Result<ScoreVector> {
    ScoreVector::new(raw.to_vec())
}

/// A list of strictly positive, finite nonconformity scores. May be empty.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
#[serde(transparent)]
pub struct ScoreVector {
    values: Vec<f64>,
}

impl ScoreVector {
    /// Takes ownership of `values` after checking every entry is positive and
    /// finite. The error names the first offending index.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        check_positive(&values)?;
        Ok(Self { values })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.values
    }
}

impl<'de> Deserialize<'de> for ScoreVector {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let values = Vec::<f64>::deserialize(d)?;
        ScoreVector::new(values).map_err(serde::de::Error::custom)
    }
}

impl TryFrom<Vec<f64>> for ScoreVector {
    type Error = Error;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        ScoreVector::new(values)
    }
}

/// Candidate scores `S(x, y)` for every label `y` in `0..K` of one test feature.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct LabelScoreRow {
    per_label: Vec<f64>,
}

impl LabelScoreRow {
    /// Requires at least one label and strictly positive finite scores.
    pub fn new(per_label: Vec<f64>) -> Result<Self> {
        if per_label.is_empty() {
            return Err(domain("a label score row needs at least one label"));
        }
        check_positive(&per_label)?;
        Ok(Self { per_label })
    }

    pub fn values(&self) -> &[f64] {
        &self.per_label
    }

    /// Number of labels `K`.
    pub fn len(&self) -> usize {
        self.per_label.len()
    }

    pub fn is_empty(&self) -> bool {
        self.per_label.is_empty()
    }

    pub fn get(&self, label: usize) -> Option<f64> {
        self.per_label.get(label).copied()
    }
}

impl<'de> Deserialize<'de> for LabelScoreRow {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let values = Vec::<f64>::deserialize(d)?;
        LabelScoreRow::new(values).map_err(serde::de::Error::custom)
    }
}
