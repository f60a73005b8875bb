//! Synthetic classifier standing in for a trained network.
//!
//! Each example has a latent label distribution `q` (a Dirichlet draw mixed
//! with a small uniform floor). The "model" reports `p̂ = softmax(ln q + σ z)`
//! with Gaussian `z`, so it is informative but miscalibrated, and label
//! scores are computed from `p̂_y` (cross-entropy by default). Examples are
//! i.i.d., which is the only property the coverage guarantees rely on.

use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::scores::positivity_guard;

/// Score of a label with predicted probability `p`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LabelScore {
    /// `-ln p`, shifted by the positivity guard.
    #[default]
    CrossEntropy,
    /// `1 / p^exponent`.
    InversePower { exponent: f64 },
}

impl LabelScore {
    #[inline]
    pub fn score(&self, p: f64) -> f64 {
        match *self {
            LabelScore::CrossEntropy => positivity_guard(-p.ln()),
            LabelScore::InversePower { exponent } => p.powf(-exponent),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassifierModel {
    /// Number of labels `K`.
    pub labels: usize,
    /// Symmetric Dirichlet concentration of the latent distribution.
    pub concentration: f64,
    /// Weight of the uniform floor mixed into `q`.
    pub floor: f64,
    /// Standard deviation of the log-probability noise.
    pub noise: f64,
    pub score: LabelScore,
}

impl ClassifierModel {
    pub fn new(labels: usize) -> Self {
        Self { labels, concentration: 0.05, floor: 0.01, noise: 0.5, score: LabelScore::CrossEntropy }
    }

    pub fn validate(&self) -> Result<()> {
        if self.labels < 2 {
            return Err(domain(format!("need at least 2 labels, got {}", self.labels)));
        }
        let ok = self.concentration > 0.0
            && self.concentration.is_finite()
            && self.floor > 0.0
            && self.floor < 1.0
            && self.noise >= 0.0
            && self.noise.is_finite()
            && match self.score {
                LabelScore::CrossEntropy => true,
                LabelScore::InversePower { exponent } => exponent > 0.0 && exponent.is_finite(),
            };
        if ok {
            Ok(())
        } else {
            Err(domain(format!("invalid classifier model {self:?}")))
        }
    }

    /// Latent label distribution. With `ambiguous`, redraws until at least two
    /// labels carry probability `>= 0.1`.
    pub fn latent<R: Rng + ?Sized>(&self, rng: &mut R, ambiguous: bool) -> Vec<f64> {
        let gamma = Gamma::new(self.concentration, 1.0).expect("validated concentration");
        let mut q = vec![0.0; self.labels];
        loop {
            for x in q.iter_mut() {
                *x = gamma.sample(rng);
            }
            let total: f64 = q.iter().sum();
            let uniform = self.floor / self.labels as f64;
            if total > 0.0 {
                for x in q.iter_mut() {
                    *x = (1.0 - self.floor) * *x / total + uniform;
                }
            } else {
                q.fill(1.0 / self.labels as f64);
            }
            if !ambiguous || q.iter().filter(|p| **p >= 0.1).count() >= 2 {
                return q;
            }
        }
    }

    /// Model probabilities `softmax(ln q + noise · z)`.
    pub fn predict<R: Rng + ?Sized>(&self, q: &[f64], rng: &mut R) -> Vec<f64> {
        let mut logits: Vec<f64> = q
            .iter()
            .map(|p| {
                let z: f64 = StandardNormal.sample(rng);
                p.ln() + self.noise * z
            })
            .collect();
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for l in logits.iter_mut() {
            *l = (*l - max).exp();
            total += *l;
        }
        for l in logits.iter_mut() {
            *l /= total;
        }
        logits
    }

    /// Scores of every label under predicted probabilities `p_hat`.
    pub fn scores(&self, p_hat: &[f64]) -> Vec<f64> {
        p_hat.iter().map(|p| self.score.score(*p)).collect()
    }
}

/// Draws a label index from probabilities `q`.
pub fn sample_label<R: Rng + ?Sized>(q: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random::<f64>() * q.iter().sum::<f64>();
    let mut acc = 0.0;
    for (i, p) in q.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    q.len() - 1
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::substream;

    #[test]
    fn latent_is_distribution_with_floor() {
        let m = ClassifierModel::new(10);
        let mut rng = substream(1, 0);
        for _ in 0..100 {
            let q = m.latent(&mut rng, false);
            assert!((q.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(q.iter().all(|p| *p >= 0.001 * (1.0 - 1e-12)));
        }
    }

    #[test]
    fn ambiguous_latent_has_two_plausible_labels() {
        let m = ClassifierModel::new(10);
        let mut rng = substream(2, 0);
        for _ in 0..200 {
            let q = m.latent(&mut rng, true);
            assert!(q.iter().filter(|p| **p >= 0.1).count() >= 2);
        }
    }

    #[test]
    fn predictions_and_scores_positive() {
        let m = ClassifierModel::new(5);
        let mut rng = substream(3, 0);
        let q = m.latent(&mut rng, false);
        let p = m.predict(&q, &mut rng);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(m.scores(&p).iter().all(|s| *s > 0.0 && s.is_finite()));
        let inv = ClassifierModel { score: LabelScore::InversePower { exponent: 0.25 }, ..m };
        assert!(inv.scores(&p).iter().all(|s| *s >= 1.0 && s.is_finite()));
    }

    #[test]
    fn label_sampling_frequencies() {
        let q = [0.2, 0.5, 0.3];
        let mut rng = substream(4, 0);
        let mut counts = [0usize; 3];
        let n = 60_000;
        for _ in 0..n {
            counts[sample_label(&q, &mut rng)] += 1;
        }
        for (c, p) in counts.iter().zip(q) {
            let f = *c as f64 / n as f64;
            assert!((f - p).abs() < 4.0 * (p * (1.0 - p) / n as f64).sqrt());
        }
    }

    #[test]
    fn validation() {
        assert!(ClassifierModel::new(1).validate().is_err());
        assert!(ClassifierModel { noise: -1.0, ..ClassifierModel::new(3) }.validate().is_err());
        assert!(ClassifierModel::new(3).validate().is_ok());
    }
}
