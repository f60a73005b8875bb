use std::fmt;

use serde::{Deserialize, Serialize};

/// Boundary of a score-interval conformal set.
///
/// E-value sets are strict (`s < t`), rank-based sets are inclusive
/// (`s <= t`); the variant carries which comparison applies so membership is
/// never ambiguous.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum Threshold {
    /// Set is `{ s : s < t }`.
    Below(f64),
    /// Set is `{ s : s <= t }`.
    AtMost(f64),
    /// Every positive score is in the set.
    Unbounded,
    /// No score is in the set.
    Empty,
}

impl Threshold {
    pub fn contains(&self, score: f64) -> bool {
        match *self {
            Threshold::Below(t) => score < t,
            Threshold::AtMost(t) => score <= t,
            Threshold::Unbounded => true,
            Threshold::Empty => false,
        }
    }

    /// Finite boundary value, if any.
    pub fn value(&self) -> Option<f64> {
        match *self {
            Threshold::Below(t) | Threshold::AtMost(t) => Some(t),
            Threshold::Unbounded | Threshold::Empty => None,
        }
    }

    pub fn is_unbounded(&self) -> bool {
        matches!(self, Threshold::Unbounded)
    }

    pub fn is_empty(&self) -> bool {
        matches!(self, Threshold::Empty)
    }

    /// Indices of the labels whose score falls inside the set, ascending.
    pub fn select(&self, scores: &[f64]) -> Vec<usize> {
        scores
            .iter()
            .enumerate()
            .filter(|(_, s)| self.contains(**s))
            .map(|(i, _)| i)
            .collect()
    }
}

/// Renders as the boundary value, `inf`, or `empty` (the CSV convention).
impl fmt::Display for Threshold {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.value() {
            Some(t) => write!(f, "{t:?}"),
            None if self.is_unbounded() => f.write_str("inf"),
            None => f.write_str("empty"),
        }
    }
}

/// `ceil(x)` that treats values within 1e-9 (relative) of an integer as that
/// integer, so products like `(1 - 0.1) * 10` land on 9 rather than 10.
pub(crate) fn ceil_tol(x: f64) -> f64 {
    let r = x.round();
    if (x - r).abs() <= 1e-9 * r.abs().max(1.0) {
        r
    } else {
        x.ceil()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn membership() {
        assert!(Threshold::Below(2.0).contains(1.9));
        assert!(!Threshold::Below(2.0).contains(2.0));
        assert!(Threshold::AtMost(2.0).contains(2.0));
        assert!(Threshold::Unbounded.contains(1e300));
        assert!(!Threshold::Empty.contains(1e-300));
    }

    #[test]
    fn display() {
        assert_eq!(Threshold::Below(6.0).to_string(), "6.0");
        assert_eq!(Threshold::Unbounded.to_string(), "inf");
        assert_eq!(Threshold::Empty.to_string(), "empty");
    }

    #[test]
    fn json_shape() {
        let j = serde_json::to_string(&Threshold::Below(6.0)).unwrap();
        assert_eq!(j, r#"{"kind":"below","value":6.0}"#);
        let j = serde_json::to_string(&Threshold::Unbounded).unwrap();
        assert_eq!(j, r#"{"kind":"unbounded"}"#);
    }

    #[test]
    fn ceil_with_tolerance() {
        assert_eq!(ceil_tol((1.0 - 0.1) * 10.0), 9.0);
        assert_eq!(ceil_tol(0.85 * 14.0), 12.0);
        assert_eq!(ceil_tol(2.5), 3.0);
        assert_eq!(ceil_tol(3.0), 3.0);
        assert_eq!(ceil_tol(3.0000001), 4.0);
    }
}
