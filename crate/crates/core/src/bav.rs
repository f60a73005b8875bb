//! Batch anytime-valid conformal prediction.
//!
//! Each batch `t` contributes an e-value `E_t` computed from its own
//! calibration scores and test score. The running product
//! `M_t = E_1 · … · E_t` is a test martingale when every batch is exchangeable
//! given the past, so Ville's inequality gives
//! `P(∃t : M_t >= 1/α) <= α`. Batch `t`'s set collects every score `v` with
//! `M_{t-1} · E_t(v) < 1/α`; all sets then cover simultaneously with
//! probability at least `1 - α`, for any number of batches.
//!
//! Besides the all-in product, [`Strategy::Grapa`] bets a fraction
//! `λ_t ∈ [0, γ]` of wealth each round, chosen from past e-values only:
//! `M_t = Π (1 - λ_s + λ_s E_s)`.
//!
//! Wealth lives in log space: with poor scores `M_t` decays geometrically
//! and would underflow.

use serde::{Deserialize, Serialize};

use crate::error::{check_alpha, domain, Result};
use crate::evalue::{e_value, EValue};
use crate::scores::ScoreVector;
use crate::threshold::Threshold;

/// Default cap on the betting fraction for [`Strategy::Grapa`].
pub const DEFAULT_GAMMA: f64 = 0.5;

/// How wealth is bet on each batch's e-value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "strategy", rename_all = "snake_case")]
pub enum Strategy {
    /// `λ_t = 1`: plain product of e-values.
    AllIn,
    /// `λ_t` maximizes past average log-wealth over `[0, gamma]`.
    Grapa { gamma: f64 },
}

impl Strategy {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Strategy::AllIn => Ok(()),
            Strategy::Grapa { gamma } if gamma > 0.0 && gamma <= 1.0 => Ok(()),
            Strategy::Grapa { gamma } => Err(domain(format!("gamma must lie in (0, 1], got {gamma}"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Strategy::AllIn => "all_in",
            Strategy::Grapa { .. } => "grapa",
        }
    }
}

/// Wealth of one test martingale and the e-values that built it.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MartingaleState {
    log_wealth: f64,
    bankrupt: bool,
    e_history: Vec<EValue>,
}

impl MartingaleState {
    /// `M_0 = 1` at `t = 0`.
    pub fn new() -> Self {
        Self::default()
    }

    /// Number of batches processed.
    pub fn t(&self) -> usize {
        self.e_history.len()
    }

    /// `ln M_t`; `-inf` once wealth has hit zero.
    pub fn log_wealth(&self) -> f64 {
        if self.bankrupt {
            f64::NEG_INFINITY
        } else {
            self.log_wealth
        }
    }

    pub fn wealth(&self) -> f64 {
        self.log_wealth().exp()
    }

    /// Zero wealth is absorbing.
    pub fn is_bankrupt(&self) -> bool {
        self.bankrupt
    }

    pub fn e_history(&self) -> &[EValue] {
        &self.e_history
    }

    /// `M_t = M_{t-1} · e`.
    pub fn product_update(mut self, e: EValue) -> Self {
        self.multiply(e.get());
        self.e_history.push(e);
        self
    }

    /// `M_t = M_{t-1} · (1 - λ + λ e)`. `λ = 1` is exactly
    /// [`product_update`](Self::product_update).
    ///
    /// `lambda` must depend on past e-values only; that is the caller's
    /// responsibility.
    pub fn mixture_update(mut self, e: EValue, lambda: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&lambda) {
            return Err(domain(format!("lambda must lie in [0, 1], got {lambda}")));
        }
        if lambda == 1.0 {
            return Ok(self.product_update(e));
        }
        self.multiply(1.0 - lambda + lambda * e.get());
        self.e_history.push(e);
        Ok(self)
    }

    fn multiply(&mut self, increment: f64) {
        if increment == 0.0 {
            self.bankrupt = true;
        } else if !self.bankrupt {
            self.log_wealth += increment.ln();
        }
    }
}

/// All-in set boundary for batch `t`, from the wealth before the batch.
///
/// With `K = M_{t-1} (n_t+1) α` and `Σ` the calibration sum, the condition
/// `M_{t-1} · v (n_t+1) / (Σ + v) < 1/α` reduces to `v (K - 1) < Σ`:
/// unbounded if `K <= 1`, `Σ / (K - 1)` if `Σ > 0`, empty otherwise.
pub fn bav_threshold(state: &MartingaleState, calib: &ScoreVector, alpha: f64) -> Result<Threshold> {
    check_alpha(alpha)?;
    Ok(all_in_threshold(state.log_wealth(), calib.sum(), calib.len(), alpha))
}

fn all_in_threshold(log_wealth: f64, sum: f64, n: usize, alpha: f64) -> Threshold {
    let k = log_wealth.exp() * (n as f64 + 1.0) * alpha;
    if k <= 1.0 {
        Threshold::Unbounded
    } else if sum > 0.0 {
        Threshold::Below(sum / (k - 1.0))
    } else {
        Threshold::Empty
    }
}

/// Set boundary when betting fraction `lambda` is applied:
/// `M_{t-1} (1 - λ + λ E_t(v)) < 1/α`.
fn mixture_threshold(log_wealth: f64, sum: f64, n: usize, alpha: f64, lambda: f64) -> Threshold {
    if lambda == 1.0 {
        return all_in_threshold(log_wealth, sum, n, alpha);
    }
    // budget: 1 / (α M_{t-1}); infinite when wealth is zero
    let budget = (-log_wealth).exp() / alpha;
    if lambda == 0.0 {
        return if budget > 1.0 { Threshold::Unbounded } else { Threshold::Empty };
    }
    // need E_t(v) < c, where E_t ranges over (0, n+1)
    let c = (budget - (1.0 - lambda)) / lambda;
    let top = n as f64 + 1.0;
    if c >= top {
        Threshold::Unbounded
    } else if c <= 0.0 || sum <= 0.0 {
        Threshold::Empty
    } else {
        // v (n+1) / (Σ + v) < c  <=>  v < c Σ / (n + 1 - c)
        Threshold::Below(c * sum / (top - c))
    }
}

/// Betting fraction maximizing `mean_s ln(1 - λ + λ E_s)` over `λ ∈ [0, gamma]`.
///
/// The objective is concave, so its derivative
/// `mean_s (E_s - 1) / (1 - λ + λ E_s)` is decreasing and the maximizer is its
/// root (or an endpoint). Solved by safeguarded Newton steps inside a
/// shrinking bracket to `1e-9` in λ. A flat objective (all `E_s = 1`) or an
/// empty history gives `0`.
pub fn grapa_lambda(e_history: &[EValue], gamma: f64) -> Result<f64> {
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(domain(format!("gamma must lie in (0, 1], got {gamma}")));
    }
    if e_history.is_empty() {
        return Ok(0.0);
    }
    let slope = |lambda: f64| -> (f64, f64) {
        let (mut d1, mut d2) = (0.0, 0.0);
        for e in e_history {
            let g = e.get() - 1.0;
            let wealth = 1.0 - lambda + lambda * e.get();
            let r = g / wealth;
            d1 += r;
            d2 -= r * r;
        }
        let n = e_history.len() as f64;
        (d1 / n, d2 / n)
    };

    if slope(0.0).0 <= 0.0 {
        return Ok(0.0);
    }
    let (end, _) = slope(gamma);
    if end >= 0.0 {
        return Ok(gamma);
    }

    let (mut lo, mut hi) = (0.0f64, gamma);
    let mut x = 0.5 * gamma;
    for _ in 0..200 {
        let (d1, d2) = slope(x);
        if d1 > 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        if hi - lo <= 1e-9 {
            break;
        }
        let newton = if d2 < 0.0 { x - d1 / d2 } else { f64::NAN };
        let next = if newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
        if (next - x).abs() <= 1e-12 {
            x = next;
            break;
        }
        x = next;
    }
    Ok(x.clamp(0.0, gamma))
}

/// Result of running one batch through the procedure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchOutcome {
    /// 1-based batch index.
    pub t: usize,
    pub n_t: usize,
    pub threshold: Threshold,
    pub e_value_observed: EValue,
    /// Betting fraction used for this batch (1 for all-in).
    pub lambda: f64,
    pub covered: bool,
}

/// Processes one batch: builds its set from the wealth *before* the test point
/// is seen, records whether `test_score` is covered, then updates wealth with
/// the batch's e-value.
pub fn process_batch(
    state: MartingaleState,
    calib: &ScoreVector,
    test_score: f64,
    alpha: f64,
    strategy: Strategy,
) -> Result<(BatchOutcome, MartingaleState)> {
    check_alpha(alpha)?;
    strategy.validate()?;
    let e = e_value(test_score, calib)?;
    let lambda = match strategy {
        Strategy::AllIn => 1.0,
        Strategy::Grapa { gamma } => grapa_lambda(state.e_history(), gamma)?,
    };
    let threshold = mixture_threshold(state.log_wealth(), calib.sum(), calib.len(), alpha, lambda);
    let outcome = BatchOutcome {
        t: state.t() + 1,
        n_t: calib.len(),
        threshold,
        e_value_observed: e,
        lambda,
        covered: threshold.contains(test_score),
    };
    let next = state.mixture_update(e, lambda)?;
    Ok((outcome, next))
}
