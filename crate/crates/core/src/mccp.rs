//! Monte Carlo conformal prediction under ambiguous ground truth.
//!
//! Each calibration feature `X_i` carries `m` labels sampled from
//! `P(Y | X_i)`, giving scores `S_i^j`. Per expert `j`, the column
//! `S_1^j, …, S_n^j` together with the test score is exchangeable, but the
//! pooled `n·m` scores are not.
//!
//! * p-variant: averaging the `m` rank p-values only yields a p-variable after
//!   doubling, so the pooled-quantile set covers with probability `>= 1 - 2α`.
//! * e-variant: the mean of the `m` column e-values is itself an e-value, so
//!   `{ y : Ē(S(x, y)) < 1/α }` covers with probability `>= 1 - α`.

use serde::Serialize;

use crate::error::{check_alpha, domain, Error, Result};
use crate::evalue::{e_value_from_sum, EValue};
use crate::pcp::kth_smallest;
use crate::scores::LabelScoreRow;
use crate::threshold::{ceil_tol, Threshold};

/// Calibration scores `S_i^j`: `n` examples (rows) by `m` experts (columns).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExpertScoreMatrix {
    n: usize,
    m: usize,
    /// Row-major, `n * m` entries.
    scores: Vec<f64>,
    column_sums: Vec<f64>,
}

impl ExpertScoreMatrix {
    /// Builds the matrix from calibration rows, each holding one score per
    /// expert. Rows must be rectangular with `m >= 1` and entries positive.
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let m = rows.first().map(Vec::len).ok_or_else(|| domain("expert matrix needs at least one row"))?;
        if let Some(i) = rows.iter().position(|r| r.len() != m) {
            return Err(domain(format!("row {i} has {} experts, expected {m}", rows[i].len())));
        }
        let n = rows.len();
        Self::from_row_major(n, m, rows.into_iter().flatten().collect())
    }

    /// Builds the matrix from per-expert columns of equal length. Columns may
    /// be empty (`n = 0`), which makes every column e-value 1.
    pub fn from_columns(columns: Vec<Vec<f64>>) -> Result<Self> {
        let m = columns.len();
        let n = columns.first().map(Vec::len).ok_or_else(|| domain("expert matrix needs at least one expert"))?;
        if let Some(j) = columns.iter().position(|c| c.len() != n) {
            return Err(domain(format!("column {j} has {} rows, expected {n}", columns[j].len())));
        }
        let mut scores = Vec::with_capacity(n * m);
        for i in 0..n {
            scores.extend(columns.iter().map(|c| c[i]));
        }
        Self::from_row_major(n, m, scores)
    }

    pub(crate) fn from_row_major(n: usize, m: usize, scores: Vec<f64>) -> Result<Self> {
        if m == 0 {
            return Err(domain("expert matrix needs at least one expert"));
        }
        debug_assert_eq!(scores.len(), n * m);
        if let Some(k) = scores.iter().position(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::InvalidScore { index: k, value: scores[k] });
        }
        let mut column_sums = vec![0.0; m];
        for row in scores.chunks_exact(m) {
            for (acc, v) in column_sums.iter_mut().zip(row) {
                *acc += v;
            }
        }
        Ok(Self { n, m, scores, column_sums })
    }

    /// Calibration examples.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Experts per example.
    pub fn m(&self) -> usize {
        self.m
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.scores[i * self.m + j]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, j)).collect()
    }

    pub fn column_sums(&self) -> &[f64] {
        &self.column_sums
    }

    /// Keeps only the first `m` experts.
    pub fn first_experts(&self, m: usize) -> Result<Self> {
        if m == 0 || m > self.m {
            return Err(domain(format!("cannot take {m} of {} experts", self.m)));
        }
        let scores = self.scores.chunks_exact(self.m).flat_map(|r| r[..m].iter().copied()).collect();
        Self::from_row_major(self.n, m, scores)
    }

    pub(crate) fn into_scores(self) -> Vec<f64> {
        self.scores
    }

    fn pooled(&self) -> &[f64] {
        &self.scores
    }
}

/// Pooled-quantile threshold of the p-variant.
///
/// The level is `(⌈m(1-α)(n+1)⌉ - 1) / (mn)`; the threshold is the
/// `⌈level · mn⌉`-th smallest pooled score, inclusive. Unbounded when the
/// level reaches 1; empty when it is 0 (the quantile at level 0 is `-∞`).
///
/// At `m = 1` this is one order statistic below the split-conformal
/// threshold: rank `⌈(1-α)(n+1)⌉ - 1` instead of `⌈(1-α)(n+1)⌉`.
pub fn mc_p_threshold(matrix: &ExpertScoreMatrix, alpha: f64) -> Result<Threshold> {
    check_alpha(alpha)?;
    if matrix.n == 0 {
        return Err(domain("calibration set must be nonempty"));
    }
    let total = matrix.n * matrix.m;
    let rank = ceil_tol(matrix.m as f64 * (1.0 - alpha) * (matrix.n as f64 + 1.0)) as usize - 1;
    if rank >= total {
        return Ok(Threshold::Unbounded);
    }
    if rank == 0 {
        return Ok(Threshold::Empty);
    }
    Ok(Threshold::AtMost(kth_smallest(matrix.pooled(), rank)))
}

/// Labels inside the p-variant set.
pub fn mc_p_set(matrix: &ExpertScoreMatrix, row: &LabelScoreRow, alpha: f64) -> Result<Vec<usize>> {
    Ok(mc_p_threshold(matrix, alpha)?.select(row.values()))
}

#[inline]
fn mean_column_e(column_sums: &[f64], n: usize, score: f64) -> f64 {
    let total: f64 = column_sums.iter().map(|&a| e_value_from_sum(score, a, n)).sum();
    total / column_sums.len() as f64
}

/// Mean over experts of the per-column e-values of `test_score`.
pub fn mc_e_value(matrix: &ExpertScoreMatrix, test_score: f64) -> Result<EValue> {
    if !(test_score > 0.0 && test_score.is_finite()) {
        return Err(domain(format!("test score must be positive and finite, got {test_score}")));
    }
    EValue::new(mean_column_e(&matrix.column_sums, matrix.n, test_score))
}

/// Root `s*` of `Ē(s) = 1/α`; the e-variant set is `{ s : s < s* }`.
///
/// `Ē` is continuous and strictly increasing with supremum `n + 1`, so the
/// set is unbounded when `n + 1 <= 1/α`. Otherwise the root is bracketed by
/// doubling from the largest column sum and bisected to a relative width of
/// `1e-9` (at most 200 iterations).
pub fn mc_e_threshold(matrix: &ExpertScoreMatrix, alpha: f64) -> Result<Threshold> {
    check_alpha(alpha)?;
    let target = 1.0 / alpha;
    if matrix.n as f64 + 1.0 <= target {
        return Ok(Threshold::Unbounded);
    }
    let e = |s: f64| mean_column_e(&matrix.column_sums, matrix.n, s);
    let mut hi = matrix.column_sums.iter().copied().fold(f64::MIN_POSITIVE, f64::max);
    while e(hi) < target {
        hi *= 2.0;
        if !hi.is_finite() {
            return Ok(Threshold::Unbounded);
        }
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        if hi - lo <= 1e-9 * hi {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if e(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(Threshold::Below(0.5 * (lo + hi)))
}

/// Labels `y` with `Ē(row[y]) < 1/α`, evaluated directly per label.
pub fn mc_e_set(matrix: &ExpertScoreMatrix, row: &LabelScoreRow, alpha: f64) -> Result<Vec<usize>> {
    check_alpha(alpha)?;
    let target = 1.0 / alpha;
    Ok(row
        .values()
        .iter()
        .enumerate()
        .filter(|(_, s)| mean_column_e(&matrix.column_sums, matrix.n, **s) < target)
        .map(|(y, _)| y)
        .collect())
}
