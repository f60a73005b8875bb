use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, LogNormal, Pareto};
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::scores::ScoreVector;

/// Independent generator for repetition `index` of the experiment seeded with
/// `seed`. Streams never overlap, so repetitions can run in any order.
pub fn substream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Positive score distributions for synthetic calibration data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ScoreDistribution {
    LogNormal { mu: f64, sigma: f64 },
    Exponential { rate: f64 },
    Pareto { scale: f64, shape: f64 },
    /// Every draw equals `value`; ties everywhere.
    Constant { value: f64 },
}

impl Default for ScoreDistribution {
    fn default() -> Self {
        ScoreDistribution::Exponential { rate: 1.0 }
    }
}

impl ScoreDistribution {
    pub fn validate(&self) -> Result<()> {
        self.sampler().map(|_| ())
    }

    pub(crate) fn sampler(&self) -> Result<Sampler> {
        let bad = |what: &str| domain(format!("invalid {what} parameters: {self:?}"));
        Ok(match *self {
            ScoreDistribution::LogNormal { mu, sigma } => {
                if !mu.is_finite() || !(sigma >= 0.0 && sigma.is_finite()) {
                    return Err(bad("lognormal"));
                }
                Sampler::LogNormal(LogNormal::new(mu, sigma).map_err(|_| bad("lognormal"))?)
            }
            ScoreDistribution::Exponential { rate } => {
                if !(rate > 0.0 && rate.is_finite()) {
                    return Err(bad("exponential"));
                }
                Sampler::Exp(Exp::new(rate).map_err(|_| bad("exponential"))?)
            }
            ScoreDistribution::Pareto { scale, shape } => {
                Sampler::Pareto(Pareto::new(scale, shape).map_err(|_| bad("pareto"))?)
            }
            ScoreDistribution::Constant { value } => {
                if !(value > 0.0 && value.is_finite()) {
                    return Err(bad("constant"));
                }
                Sampler::Constant(value)
            }
        })
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) enum Sampler {
    LogNormal(LogNormal<f64>),
    Exp(Exp<f64>),
    Pareto(Pareto<f64>),
    Constant(f64),
}

impl Sampler {
    /// One strictly positive draw.
    #[inline]
    pub(crate) fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        loop {
            let x = match self {
                Sampler::LogNormal(d) => d.sample(rng),
                Sampler::Exp(d) => d.sample(rng),
                Sampler::Pareto(d) => d.sample(rng),
                Sampler::Constant(v) => *v,
            };
            if x > 0.0 && x.is_finite() {
                return x;
            }
        }
    }
}

/// `n` i.i.d. draws from `dist`.
pub fn gen_exchangeable_scores<R: Rng + ?Sized>(dist: &ScoreDistribution, n: usize, rng: &mut R) -> Result<ScoreVector> {
    let sampler = dist.sampler()?;
    ScoreVector::new((0..n).map(|_| sampler.draw(rng)).collect())
}
