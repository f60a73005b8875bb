//! Classification experiments on the synthetic classifier: fixed-size sets
//! with data-dependent level, and Monte Carlo conformal prediction with
//! several expert labels per calibration example.

use serde_json::json;

use crate::error::{check_alpha, domain, Error, Result};
use crate::mccp::{mc_e_set, mc_p_threshold, ExpertScoreMatrix};
use crate::posthoc::{fixed_size_set, posthoc_ratio_estimate, AlphaGrid};
use crate::report::{mean_std, CoverageReport, Histogram};
use crate::scores::{LabelScoreRow, ScoreVector};
use crate::sim::classifier::{sample_label, ClassifierModel};
use crate::sim::dist::substream;

/// Setup of the fixed-size-set experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct PosthocConfig {
    /// Calibration examples per trial.
    pub n: usize,
    /// Maximum set size `C`.
    pub target_size: usize,
    pub grid: AlphaGrid,
    pub model: ClassifierModel,
}

impl PosthocConfig {
    pub fn new(n: usize, labels: usize, target_size: usize, grid: AlphaGrid) -> Self {
        Self { n, target_size, grid, model: ClassifierModel::new(labels) }
    }
}

/// Per trial: draw a calibration set and one test example, choose `α̃` from
/// the calibration scores and the test example's label-score row (never its
/// label), and record whether the fixed-size set covers the true label.
///
/// Infeasible trials are counted in `extras.infeasible` and left out of the
/// coverage, size histogram and ratio estimate.
pub fn run_posthoc_experiment(config: &PosthocConfig, reps: u64, seed: u64) -> Result<CoverageReport> {
    config.model.validate()?;
    if config.n == 0 || config.target_size == 0 {
        return Err(domain("calibration size and target size must be positive"));
    }
    let model = &config.model;
    let k = model.labels;
    let mut trials: Vec<(bool, f64)> = Vec::with_capacity(reps as usize);
    let mut size_counts = vec![0u64; k + 1];
    let mut alpha_counts = vec![0u64; config.grid.candidates().len()];
    let mut infeasible = 0u64;
    let mut nonmonotone = 0u64;
    let mut max_size = 0usize;
    let mut calib = Vec::with_capacity(config.n);
    for rep in 0..reps {
        let mut rng = substream(seed, rep);
        calib.clear();
        for _ in 0..config.n {
            let q = model.latent(&mut rng, false);
            let y = sample_label(&q, &mut rng);
            let p_hat = model.predict(&q, &mut rng);
            calib.push(model.score.score(p_hat[y]));
        }
        let q = model.latent(&mut rng, false);
        let y_test = sample_label(&q, &mut rng);
        let row = LabelScoreRow::new(model.scores(&model.predict(&q, &mut rng)))?;
        let calib_scores = ScoreVector::new(std::mem::take(&mut calib))?;
        let result = fixed_size_set(&calib_scores, &row, config.target_size, &config.grid);
        calib = calib_scores.into_inner();
        let (profile, chosen) = match result {
            Ok((sel, set)) => (sel.profile, Some((sel.alpha_tilde, set))),
            Err(Error::Infeasible { profile, .. }) => (profile, None),
            Err(e) => return Err(e),
        };
        if profile.windows(2).any(|w| w[1].1 > w[0].1) {
            nonmonotone += 1;
        }
        match chosen {
            Some((alpha_tilde, set)) => {
                max_size = max_size.max(set.len());
                size_counts[set.len()] += 1;
                let idx = config.grid.candidates().iter().position(|a| *a == alpha_tilde).unwrap_or(0);
                alpha_counts[idx] += 1;
                trials.push((set.contains(&y_test), alpha_tilde));
            }
            None => infeasible += 1,
        }
    }

    let feasible = trials.len() as u64;
    let hits = trials.iter().filter(|t| t.0).count() as u64;
    let mut report = CoverageReport::new("posthoc_fixed_size")
        .param("n", config.n)
        .param("labels", k)
        .param("target_size", config.target_size)
        .param("grid", config.grid.candidates().to_vec())
        .param("model", serde_json::to_value(model)?)
        .param("reps", reps)
        .param("seed", seed);
    report.set_binomial(hits, feasible);
    report.histogram = Histogram::from_sizes(&size_counts);
    report.extra("infeasible", infeasible);
    report.extra("nonmonotone_profiles", nonmonotone);
    report.extra("max_set_size", max_size);
    let mut alpha_hist = serde_json::Map::new();
    for (a, c) in config.grid.candidates().iter().zip(&alpha_counts) {
        alpha_hist.insert(a.to_string(), json!(c));
    }
    report.extra("alpha_tilde_histogram", serde_json::Value::Object(alpha_hist));
    if !trials.is_empty() {
        let ratio = posthoc_ratio_estimate(&trials)?;
        let alphas: Vec<f64> = trials.iter().map(|t| t.1).collect();
        let (mean_alpha, sd_alpha) = mean_std(&alphas);
        report.extra("ratio_estimate", ratio.estimate);
        report.extra("ratio_se", ratio.std_error);
        report.extra("mean_alpha_tilde", mean_alpha);
        report.extra("sd_alpha_tilde", sd_alpha);
        // first-order approximation 1 - E[α̃]; diagnostic only
        report.extra("taylor_coverage_bound", 1.0 - mean_alpha);
    }
    Ok(report)
}

/// Setup of the ambiguous-label experiment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MccpConfig {
    /// Calibration examples per split.
    pub n: usize,
    /// Expert labels per calibration example.
    pub m: usize,
    pub alpha: f64,
    /// Test examples per split.
    pub test_size: usize,
    pub model: ClassifierModel,
}

impl MccpConfig {
    pub fn new(n: usize, m: usize, labels: usize, alpha: f64) -> Self {
        Self { n, m, alpha, test_size: 500, model: ClassifierModel::new(labels) }
    }
}

/// Coverage reports of both Monte Carlo variants on the same splits.
#[derive(Debug, Clone, PartialEq)]
pub struct MccpReports {
    pub p_variant: CoverageReport,
    pub e_variant: CoverageReport,
}

/// Repeats `splits` random calibration/test splits. Every example has an
/// ambiguous latent label distribution (two or more labels with probability
/// at least 0.1); calibration examples receive `m` sampled expert labels,
/// test examples one. Coverage per split is the fraction of test labels in
/// the set; reported `coverage` is the mean over splits with `se` the
/// standard error across splits, and `extras.coverage_std` their spread.
pub fn run_mccp_experiment(config: &MccpConfig, splits: u64, seed: u64) -> Result<MccpReports> {
    check_alpha(config.alpha)?;
    config.model.validate()?;
    if config.n == 0 || config.m == 0 || config.test_size == 0 {
        return Err(domain("n, m and test size must be positive"));
    }
    let model = &config.model;
    let k = model.labels;
    let (n, m) = (config.n, config.m);
    let mut cov = [Vec::with_capacity(splits as usize), Vec::with_capacity(splits as usize)];
    let mut sizes = [vec![0u64; k + 1], vec![0u64; k + 1]];
    let mut scores = Vec::with_capacity(n * m);
    for split in 0..splits {
        let mut rng = substream(seed, split);
        scores.clear();
        for _ in 0..n {
            let q = model.latent(&mut rng, true);
            let p_hat = model.predict(&q, &mut rng);
            for _ in 0..m {
                let y = sample_label(&q, &mut rng);
                scores.push(model.score.score(p_hat[y]));
            }
        }
        let matrix = ExpertScoreMatrix::from_row_major(n, m, std::mem::take(&mut scores))?;
        let p_thr = mc_p_threshold(&matrix, config.alpha)?;
        let mut hits = [0usize; 2];
        for _ in 0..config.test_size {
            let q = model.latent(&mut rng, true);
            let y = sample_label(&q, &mut rng);
            let row = LabelScoreRow::new(model.scores(&model.predict(&q, &mut rng)))?;
            let p_set = p_thr.select(row.values());
            let e_set = mc_e_set(&matrix, &row, config.alpha)?;
            for (v, set) in [p_set, e_set].iter().enumerate() {
                hits[v] += usize::from(set.contains(&y));
                sizes[v][set.len()] += 1;
            }
        }
        for v in 0..2 {
            cov[v].push(hits[v] as f64 / config.test_size as f64);
        }
        scores = matrix_into_scores(matrix);
    }

    let make = |v: usize, method: &str| -> Result<CoverageReport> {
        let (mean, sd) = mean_std(&cov[v]);
        let mut r = CoverageReport::new(method)
            .param("n", n)
            .param("m", m)
            .param("labels", k)
            .param("alpha", config.alpha)
            .param("test_size", config.test_size)
            .param("model", serde_json::to_value(model)?)
            .param("splits", splits)
            .param("seed", seed);
        r.trials = splits;
        r.coverage = mean;
        r.se = if splits > 1 { sd / (splits as f64).sqrt() } else { 0.0 };
        r.histogram = Histogram::from_sizes(&sizes[v]);
        let total: u64 = sizes[v].iter().sum();
        let mean_size = sizes[v].iter().enumerate().map(|(s, c)| s as f64 * *c as f64).sum::<f64>() / total as f64;
        r.extra("coverage_std", sd);
        r.extra("mean_set_size", mean_size);
        r.extra("split_coverage", cov[v].clone());
        Ok(r)
    };
    let mut p_variant = make(0, "mccp_p")?;
    p_variant.extra("guaranteed_coverage", 1.0 - 2.0 * config.alpha);
    let mut e_variant = make(1, "mccp_e")?;
    e_variant.extra("guaranteed_coverage", 1.0 - config.alpha);
    Ok(MccpReports { p_variant, e_variant })
}

fn matrix_into_scores(matrix: ExpertScoreMatrix) -> Vec<f64> {
    let mut v = matrix.into_scores();
    v.clear();
    v
}
