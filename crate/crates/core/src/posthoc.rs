//! Fixed-size conformal sets with data-dependent coverage.
//!
//! `P = 1/E` is a post-hoc p-variable, so the e-set may be built at a level
//! `α̃` chosen *after* looking at the calibration data and the test feature
//! (never its label) while keeping `E[P(miss | α̃) / α̃] <= 1`. Picking the
//! smallest grid level whose set has at most `C` labels gives sets of bounded
//! size whose coverage adapts to the difficulty of the instance.

use serde::{Deserialize, Serialize};

use crate::error::{check_alpha, domain, Error, Result};
use crate::evalue::e_set_threshold;
use crate::scores::{LabelScoreRow, ScoreVector};

/// Strictly increasing candidate levels in `(0, 1)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct AlphaGrid {
    candidates: Vec<f64>,
}

impl AlphaGrid {
    pub fn new(candidates: Vec<f64>) -> Result<Self> {
        if candidates.is_empty() {
            return Err(domain("alpha grid must be nonempty"));
        }
        for &a in &candidates {
            check_alpha(a)?;
        }
        if candidates.windows(2).any(|w| w[0] >= w[1]) {
            return Err(domain("alpha grid must be strictly increasing"));
        }
        Ok(Self { candidates })
    }

    /// `start, start + step, …` up to `stop` inclusive (within 1e-12).
    /// Candidates are rounded to 12 decimals so `0.07` prints as `0.07`.
    pub fn from_range(start: f64, stop: f64, step: f64) -> Result<Self> {
        if !(step > 0.0 && step.is_finite()) || !start.is_finite() || !stop.is_finite() {
            return Err(domain(format!("invalid grid range {start}:{stop}:{step}")));
        }
        if stop < start {
            return Err(domain(format!("grid stop {stop} is below start {start}")));
        }
        let count = ((stop - start) / step + 1e-12).floor() as usize + 1;
        let candidates = (0..count)
            .map(|i| ((start + i as f64 * step) * 1e12).round() / 1e12)
            .collect();
        Self::new(candidates)
    }

    /// Parses `start:stop:step`.
    pub fn parse(spec: &str) -> Result<Self> {
        let parts: Vec<&str> = spec.split(':').collect();
        let [start, stop, step] = parts.as_slice() else {
            return Err(domain(format!("grid must be start:stop:step, got {spec:?}")));
        };
        let num = |s: &str| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| domain(format!("invalid number {s:?} in grid {spec:?}")))
        };
        Self::from_range(num(start)?, num(stop)?, num(step)?)
    }

    pub fn candidates(&self) -> &[f64] {
        &self.candidates
    }
}

/// `{0.01, 0.02, …, 0.30}`.
impl Default for AlphaGrid {
    fn default() -> Self {
        Self { candidates: (1..=30).map(|i| i as f64 / 100.0).collect() }
    }
}

/// Chosen level plus the size profile it was picked from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaSelection {
    pub alpha_tilde: f64,
    pub target_size: usize,
    pub achieved_size: usize,
    /// `(alpha, set_size)` for every grid candidate.
    pub profile: Vec<(f64, usize)>,
}

/// Number of labels in the e-set at level `alpha`.
pub fn set_size_at_alpha(calib: &ScoreVector, row: &LabelScoreRow, alpha: f64) -> Result<usize> {
    let t = e_set_threshold(calib, alpha)?;
    Ok(row.values().iter().filter(|s| t.contains(**s)).count())
}

/// Size of the set at every grid level.
pub fn size_profile(calib: &ScoreVector, row: &LabelScoreRow, grid: &AlphaGrid) -> Result<Vec<(f64, usize)>> {
    grid.candidates()
        .iter()
        .map(|&a| Ok((a, set_size_at_alpha(calib, row, a)?)))
        .collect()
}

/// Smallest grid level whose set has at most `target_size` labels.
///
/// Fails with [`Error::Infeasible`] (carrying the profile) when no level
/// qualifies.
pub fn select_alpha(
    calib: &ScoreVector,
    row: &LabelScoreRow,
    target_size: usize,
    grid: &AlphaGrid,
) -> Result<AlphaSelection> {
    if target_size == 0 {
        return Err(domain("target size must be at least 1"));
    }
    let profile = size_profile(calib, row, grid)?;
    select_from_profile(profile, target_size)
}

pub(crate) fn select_from_profile(profile: Vec<(f64, usize)>, target_size: usize) -> Result<AlphaSelection> {
    match profile.iter().find(|(_, size)| *size <= target_size) {
        Some(&(alpha_tilde, achieved_size)) => Ok(AlphaSelection { alpha_tilde, target_size, achieved_size, profile }),
        None => Err(Error::Infeasible { target_size, profile }),
    }
}

/// The selection and the e-set at `α̃`; the set never exceeds `target_size`.
pub fn fixed_size_set(
    calib: &ScoreVector,
    row: &LabelScoreRow,
    target_size: usize,
    grid: &AlphaGrid,
) -> Result<(AlphaSelection, Vec<usize>)> {
    let selection = select_alpha(calib, row, target_size, grid)?;
    let set = e_set_threshold(calib, selection.alpha_tilde)?.select(row.values());
    debug_assert_eq!(set.len(), selection.achieved_size);
    Ok((selection, set))
}

/// Monte Carlo estimate of `E[P(miss | α̃) / α̃]` with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatioEstimate {
    pub estimate: f64,
    pub std_error: f64,
    pub trials: usize,
}

/// `(1/N) Σ 1{miss_i} / α̃_i` over `(covered, α̃)` trials.
pub fn posthoc_ratio_estimate(trials: &[(bool, f64)]) -> Result<RatioEstimate> {
    if trials.is_empty() {
        return Err(domain("ratio estimate needs at least one trial"));
    }
    if let Some((_, a)) = trials.iter().find(|(_, a)| a.is_nan() || *a <= 0.0) {
        return Err(domain(format!("alpha_tilde must be positive, got {a}")));
    }
    let n = trials.len() as f64;
    let terms = trials.iter().map(|&(covered, a)| if covered { 0.0 } else { 1.0 / a });
    let mean = terms.clone().sum::<f64>() / n;
    let std_error = if trials.len() > 1 {
        let var = terms.map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (var / n).sqrt()
    } else {
        0.0
    };
    Ok(RatioEstimate { estimate: mean, std_error, trials: trials.len() })
}

/// Coverage lower bound `1 - α̃ - σ √(2 ln(1/δ))` for a σ-sub-Gaussian `α̃`,
/// holding with probability `1 - δ`. Returned as-is even when nonpositive.
pub fn subgaussian_bound(alpha_tilde: f64, sigma: f64, delta: f64) -> f64 {
    1.0 - alpha_tilde - sigma * (2.0 * (1.0 / delta).ln()).sqrt()
}
