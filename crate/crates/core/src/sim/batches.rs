//! Batch-stream experiments: anytime-valid sets, Ville's bound, the naive
//! per-batch baseline, and single-block coverage.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bav::{process_batch, MartingaleState, Strategy};
use crate::error::{check_alpha, domain, Error, Result};
use crate::evalue::e_set_threshold;
use crate::pcp::{conformal_rank, p_conformal_threshold};
use crate::report::{binomial_se, CoverageReport, Histogram};
use crate::scores::ScoreVector;
use crate::sim::dist::{substream, Sampler, ScoreDistribution};
use crate::threshold::Threshold;

/// Calibration size of each batch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BatchSize {
    Fixed { n: usize },
    /// Uniform on `min..=max`.
    Uniform { min: usize, max: usize },
}

/// Deterministic across-batch distribution shift. Within a batch, draws are
/// i.i.d. from the base distribution times the batch's scale.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Shift {
    #[default]
    None,
    /// `scale_t = 1 + amplitude · sin(t)`, `0 <= amplitude < 1`.
    Sinusoidal { amplitude: f64 },
}

impl Shift {
    pub fn scale(&self, t: usize) -> f64 {
        match *self {
            Shift::None => 1.0,
            Shift::Sinusoidal { amplitude } => 1.0 + amplitude * (t as f64).sin(),
        }
    }
}

/// A stream of `batches` exchangeable batches.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatchSpec {
    pub batches: usize,
    pub batch_size: BatchSize,
    pub dist: ScoreDistribution,
    pub shift: Shift,
}

impl BatchSpec {
    pub fn fixed(batches: usize, n: usize, dist: ScoreDistribution) -> Self {
        Self { batches, batch_size: BatchSize::Fixed { n }, dist, shift: Shift::None }
    }

    pub fn with_shift(mut self, shift: Shift) -> Self {
        self.shift = shift;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.dist.validate()?;
        if let BatchSize::Uniform { min, max } = self.batch_size {
            if min > max {
                return Err(domain(format!("batch size range {min}..={max} is empty")));
            }
        }
        if let Shift::Sinusoidal { amplitude } = self.shift {
            if !(0.0..1.0).contains(&amplitude) {
                return Err(domain(format!("shift amplitude must lie in [0, 1), got {amplitude}")));
            }
        }
        Ok(())
    }
}

/// Draws batch `t` (1-based): calibration scores into `buf`, returns the test
/// score drawn after them.
fn draw_batch<R: Rng + ?Sized>(spec: &BatchSpec, sampler: &Sampler, t: usize, rng: &mut R, buf: &mut Vec<f64>) -> f64 {
    let n = match spec.batch_size {
        BatchSize::Fixed { n } => n,
        BatchSize::Uniform { min, max } => rng.random_range(min..=max),
    };
    let scale = spec.shift.scale(t);
    buf.clear();
    buf.extend((0..n).map(|_| scale * sampler.draw(rng)));
    scale * sampler.draw(rng)
}

fn threshold_kind(t: &Threshold) -> usize {
    match t {
        Threshold::Empty => 0,
        Threshold::Below(_) | Threshold::AtMost(_) => 1,
        Threshold::Unbounded => 2,
    }
}

fn kind_histogram(counts: [u64; 3]) -> Histogram {
    let mut h = Histogram::new();
    h.push("empty", counts[0]);
    h.push("finite", counts[1]);
    h.push("unbounded", counts[2]);
    h
}

struct BavTally {
    joint_hits: u64,
    violations: u64,
    per_batch_hits: Vec<u64>,
    log_wealth_sum: Vec<f64>,
    kinds: [u64; 3],
    lambda_sum: f64,
    example_path: Vec<f64>,
    example_thresholds: Vec<String>,
}

fn simulate_bav(spec: &BatchSpec, alpha: f64, strategy: Strategy, reps: u64, seed: u64) -> Result<BavTally> {
    check_alpha(alpha)?;
    strategy.validate()?;
    spec.validate()?;
    let sampler = spec.dist.sampler()?;
    let log_barrier = -alpha.ln();
    let t_max = spec.batches;
    let mut tally = BavTally {
        joint_hits: 0,
        violations: 0,
        per_batch_hits: vec![0; t_max],
        log_wealth_sum: vec![0.0; t_max],
        kinds: [0; 3],
        lambda_sum: 0.0,
        example_path: Vec::new(),
        example_thresholds: Vec::new(),
    };
    let mut buf = Vec::new();
    for rep in 0..reps {
        let mut rng = substream(seed, rep);
        let mut state = MartingaleState::new();
        let mut all_covered = true;
        let mut violated = false;
        for t in 1..=t_max {
            let test = draw_batch(spec, &sampler, t, &mut rng, &mut buf);
            let calib = ScoreVector::new(std::mem::take(&mut buf))?;
            let (outcome, next) = process_batch(state, &calib, test, alpha, strategy)?;
            buf = calib.into_inner();
            state = next;

            all_covered &= outcome.covered;
            tally.per_batch_hits[t - 1] += u64::from(outcome.covered);
            tally.kinds[threshold_kind(&outcome.threshold)] += 1;
            tally.lambda_sum += outcome.lambda;
            let lw = state.log_wealth();
            tally.log_wealth_sum[t - 1] += lw.max(-1e300);
            violated |= lw >= log_barrier;
            if rep == 0 {
                tally.example_path.push(lw.max(-1e300));
                tally.example_thresholds.push(outcome.threshold.to_string());
            }
        }
        tally.joint_hits += u64::from(all_covered);
        tally.violations += u64::from(violated);
    }
    Ok(tally)
}

/// Runs `reps` independent streams through the anytime-valid procedure.
///
/// `coverage` is the fraction of streams in which *every* batch was covered.
/// Extras carry the Ville violation rate (`max_t M_t >= 1/α`), per-batch
/// marginal coverage, mean log-wealth per batch, set-kind counts, and the
/// first stream's path.
pub fn run_bav_experiment(
    spec: &BatchSpec,
    alpha: f64,
    strategy: Strategy,
    reps: u64,
    seed: u64,
) -> Result<CoverageReport> {
    if spec.batches == 0 {
        return Err(Error::Precondition("the experiment needs at least one batch".into()));
    }
    let tally = simulate_bav(spec, alpha, strategy, reps, seed)?;
    let mut report = CoverageReport::new(format!("bav_{}", strategy.name()))
        .param("alpha", alpha)
        .param("strategy", serde_json::to_value(strategy)?)
        .param("spec", serde_json::to_value(spec)?)
        .param("reps", reps)
        .param("seed", seed);
    report.set_binomial(tally.joint_hits, reps);
    report.histogram = kind_histogram(tally.kinds);
    let r = reps.max(1) as f64;
    let violation = tally.violations as f64 / r;
    report.extra("ville_violation_rate", violation);
    report.extra("ville_violation_se", binomial_se(violation, reps));
    report.extra("marginal_coverage", tally.per_batch_hits.iter().map(|h| *h as f64 / r).collect::<Vec<_>>());
    report.extra("mean_log_wealth", tally.log_wealth_sum.iter().map(|s| s / r).collect::<Vec<_>>());
    report.extra("mean_lambda", tally.lambda_sum / (r * spec.batches as f64));
    report.extra("example_log_wealth", tally.example_path);
    report.extra("example_thresholds", tally.example_thresholds);
    Ok(report)
}

/// Fraction of streams whose wealth ever reached `1/α` within the horizon.
/// Zero batches means wealth stays at `M_0 = 1 < 1/α`.
pub fn ville_violation_rate(spec: &BatchSpec, alpha: f64, strategy: Strategy, reps: u64, seed: u64) -> Result<f64> {
    check_alpha(alpha)?;
    if spec.batches == 0 || reps == 0 {
        return Ok(0.0);
    }
    let tally = simulate_bav(spec, alpha, strategy, reps, seed)?;
    Ok(tally.violations as f64 / reps as f64)
}

/// Number of batches after which independent per-batch split conformal sets
/// stop being jointly valid: `⌈ln(1-α) / ln(1-α/2)⌉`.
pub fn naive_horizon(alpha: f64) -> Result<usize> {
    check_alpha(alpha)?;
    Ok(((1.0 - alpha).ln() / (1.0 - alpha / 2.0).ln()).ceil() as usize)
}

/// Stream on which [`run_naive_sequential`] runs: `naive_horizon(alpha)`
/// batches of `n_t` Exp(1) scores. Feeding the same spec and seed to
/// [`run_bav_experiment`] replays identical data.
pub fn naive_batch_spec(alpha: f64, n_t: usize) -> Result<BatchSpec> {
    Ok(BatchSpec::fixed(naive_horizon(alpha)?, n_t, ScoreDistribution::Exponential { rate: 1.0 }))
}

/// Applies split conformal prediction to each batch independently over the
/// naive horizon and reports how often all batches were covered.
///
/// Requires `n_t >= 2/α - 1`; under that condition joint coverage falls
/// strictly below `1 - α`.
pub fn run_naive_sequential(alpha: f64, n_t: usize, reps: u64, seed: u64) -> Result<CoverageReport> {
    check_alpha(alpha)?;
    let min_n = 2.0 / alpha - 1.0;
    if (n_t as f64) < min_n {
        return Err(Error::Precondition(format!("n_t = {n_t} is below 2/alpha - 1 = {min_n:.4}")));
    }
    let spec = naive_batch_spec(alpha, n_t)?;
    let sampler = spec.dist.sampler()?;
    let horizon = spec.batches;
    let mut joint = 0u64;
    let mut per_batch = vec![0u64; horizon];
    let mut kinds = [0u64; 3];
    let mut buf = Vec::new();
    for rep in 0..reps {
        let mut rng = substream(seed, rep);
        let mut all = true;
        for t in 1..=horizon {
            let test = draw_batch(&spec, &sampler, t, &mut rng, &mut buf);
            let calib = ScoreVector::new(std::mem::take(&mut buf))?;
            let thr = p_conformal_threshold(&calib, alpha)?;
            buf = calib.into_inner();
            let covered = thr.contains(test);
            all &= covered;
            per_batch[t - 1] += u64::from(covered);
            kinds[threshold_kind(&thr)] += 1;
        }
        joint += u64::from(all);
    }
    let k = conformal_rank(n_t, alpha);
    let marginal = (k as f64 / (n_t as f64 + 1.0)).min(1.0);
    let mut report = CoverageReport::new("naive_sequential")
        .param("alpha", alpha)
        .param("n_t", n_t)
        .param("reps", reps)
        .param("seed", seed);
    report.set_binomial(joint, reps);
    report.histogram = kind_histogram(kinds);
    let r = reps.max(1) as f64;
    report.extra("horizon", horizon);
    report.extra("marginal_coverage", per_batch.iter().map(|h| *h as f64 / r).collect::<Vec<_>>());
    report.extra("theoretical_joint_coverage", marginal.powi(horizon as i32));
    report.extra("target_coverage", 1.0 - alpha);
    Ok(report)
}

/// One calibration block of `n` scores plus one test score per trial; reports
/// coverage of the fixed-level e-set and of the split conformal set on the
/// same draws, as `(e_report, p_report)`.
pub fn run_single_block_experiment(
    dist: &ScoreDistribution,
    n: usize,
    alpha: f64,
    reps: u64,
    seed: u64,
) -> Result<(CoverageReport, CoverageReport)> {
    check_alpha(alpha)?;
    if n == 0 {
        return Err(domain("calibration size must be positive"));
    }
    let spec = BatchSpec::fixed(1, n, *dist);
    let sampler = dist.sampler()?;
    let (mut e_hits, mut p_hits) = (0u64, 0u64);
    let (mut e_kinds, mut p_kinds) = ([0u64; 3], [0u64; 3]);
    let mut buf = Vec::new();
    for rep in 0..reps {
        let mut rng = substream(seed, rep);
        let test = draw_batch(&spec, &sampler, 1, &mut rng, &mut buf);
        let calib = ScoreVector::new(std::mem::take(&mut buf))?;
        let e_thr = e_set_threshold(&calib, alpha)?;
        let p_thr = p_conformal_threshold(&calib, alpha)?;
        buf = calib.into_inner();
        e_hits += u64::from(e_thr.contains(test));
        p_hits += u64::from(p_thr.contains(test));
        e_kinds[threshold_kind(&e_thr)] += 1;
        p_kinds[threshold_kind(&p_thr)] += 1;
    }
    let base = |method: &str| {
        CoverageReport::new(method)
            .param("alpha", alpha)
            .param("n", n)
            .param("dist", serde_json::to_value(dist).unwrap_or_default())
            .param("reps", reps)
            .param("seed", seed)
    };
    let mut e = base("single_block_e");
    e.set_binomial(e_hits, reps);
    e.histogram = kind_histogram(e_kinds);
    let mut p = base("single_block_p");
    p.set_binomial(p_hits, reps);
    p.histogram = kind_histogram(p_kinds);
    p.extra("upper_band", 1.0 - alpha + 1.0 / (n as f64 + 1.0));
    Ok((e, p))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn horizon_examples() {
        assert_eq!(naive_horizon(0.15).unwrap(), 3);
        assert_eq!(naive_horizon(0.5).unwrap(), 3);
        assert!(naive_horizon(0.0).is_err());
    }

    #[test]
    fn naive_precondition() {
        assert!(matches!(run_naive_sequential(0.15, 12, 10, 1), Err(Error::Precondition(_))));
        assert!(run_naive_sequential(0.15, 13, 10, 1).is_ok());
    }

    #[test]
    fn ville_degenerate_cases() {
        let spec = BatchSpec::fixed(0, 10, ScoreDistribution::default());
        assert_eq!(ville_violation_rate(&spec, 0.15, Strategy::AllIn, 100, 1).unwrap(), 0.0);
        let constant = BatchSpec::fixed(20, 10, ScoreDistribution::Constant { value: 2.0 });
        assert_eq!(ville_violation_rate(&constant, 0.15, Strategy::AllIn, 50, 1).unwrap(), 0.0);
        let r = run_bav_experiment(&constant, 0.15, Strategy::AllIn, 50, 1).unwrap();
        assert_eq!(r.coverage, 1.0);
        assert_eq!(r.extra_f64("mean_lambda"), Some(1.0));
    }

    #[test]
    fn report_histogram_counts_every_batch() {
        let spec = BatchSpec::fixed(7, 5, ScoreDistribution::default());
        let r = run_bav_experiment(&spec, 0.2, Strategy::Grapa { gamma: 0.5 }, 30, 9).unwrap();
        assert_eq!(r.histogram.total(), 7 * 30);
        assert_eq!(r.trials, 30);
        assert!((0.0..=1.0).contains(&r.coverage));
    }

    #[test]
    fn spec_validation() {
        let bad = BatchSpec { batch_size: BatchSize::Uniform { min: 5, max: 2 }, ..BatchSpec::fixed(3, 1, ScoreDistribution::default()) };
        assert!(bad.validate().is_err());
        let bad = BatchSpec::fixed(3, 5, ScoreDistribution::default()).with_shift(Shift::Sinusoidal { amplitude: 1.0 });
        assert!(bad.validate().is_err());
        assert!(run_bav_experiment(&BatchSpec::fixed(0, 5, ScoreDistribution::default()), 0.1, Strategy::AllIn, 1, 0).is_err());
    }

    #[test]
    fn deterministic_reports() {
        let spec = BatchSpec::fixed(10, 20, ScoreDistribution::LogNormal { mu: 0.0, sigma: 1.0 })
            .with_shift(Shift::Sinusoidal { amplitude: 0.5 });
        let a = run_bav_experiment(&spec, 0.1, Strategy::AllIn, 40, 5).unwrap();
        let b = run_bav_experiment(&spec, 0.1, Strategy::AllIn, 40, 5).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }
}
