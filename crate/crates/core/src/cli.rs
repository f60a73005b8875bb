//! Command-line front end.
//!
//! Exit status: `0` success, `2` input or validation error, `3` when no grid
//! level yields a set of the requested size.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use crate::bav::{process_batch, MartingaleState, Strategy, DEFAULT_GAMMA};
use crate::error::{domain, Error, Result};
use crate::io::{
    martingale_csv, profile_csv, read_batch_stream, read_candidate_row, read_expert_matrix, read_scores,
    selection_json, write_atomic, CandidateRow,
};
use crate::mccp::{mc_e_threshold, mc_p_threshold};
use crate::pcp::p_conformal_threshold;
use crate::posthoc::{fixed_size_set, AlphaGrid};
use crate::report::CoverageReport;
use crate::sim::{
    run_bav_experiment, run_mccp_experiment, run_naive_sequential, run_posthoc_experiment,
    run_single_block_experiment, BatchSize, BatchSpec, MccpConfig, PosthocConfig, ScoreDistribution, Shift,
};
use crate::threshold::Threshold;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_INFEASIBLE: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "econformal", version, about = "Conformal prediction with e-values")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Split conformal set for one candidate row.
    Baseline(BaselineArgs),
    /// Batch anytime-valid sets over a stream of batches.
    Bav(BavArgs),
    /// Fixed-size set at a data-dependent level.
    Posthoc(PosthocArgs),
    /// Monte Carlo sets from a matrix of expert-label scores.
    Mccp(MccpArgs),
    /// Monte Carlo experiments on synthetic data.
    Simulate(SimulateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StrategyArg {
    AllIn,
    Grapa,
}

#[derive(Debug, Args)]
pub struct BaselineArgs {
    #[arg(long)]
    pub alpha: f64,
    /// Calibration scores CSV (`score` or `batch_id,score`).
    #[arg(long)]
    pub calib: PathBuf,
    /// Candidate row CSV (`label,score`).
    #[arg(long)]
    pub row: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "json")]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct BavArgs {
    #[arg(long)]
    pub alpha: f64,
    /// Batch stream CSV (`batch_id,role,score`).
    #[arg(long)]
    pub stream: PathBuf,
    #[arg(long, value_enum, default_value = "all-in")]
    pub strategy: StrategyArg,
    /// Cap on the betting fraction for `grapa`, in (0, 1].
    #[arg(long, default_value_t = DEFAULT_GAMMA)]
    pub gamma: f64,
    /// Per-batch CSV `t,log_wealth,threshold,covered`; stdout if omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Summary JSON; printed after the CSV if omitted and `--out` is given.
    #[arg(long)]
    pub summary: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PosthocArgs {
    /// Maximum set size.
    #[arg(long = "C", visible_alias = "target-size")]
    pub target_size: usize,
    /// Candidate levels `start:stop:step`, endpoints inclusive.
    #[arg(long, default_value = "0.01:0.30:0.01")]
    pub grid: String,
    #[arg(long)]
    pub calib: PathBuf,
    #[arg(long)]
    pub row: PathBuf,
    /// Size profile CSV `alpha,set_size`.
    #[arg(long)]
    pub profile_out: Option<PathBuf>,
    /// Selection JSON; stdout if omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MccpArgs {
    #[arg(long)]
    pub alpha: f64,
    /// Expert matrix CSV (`expert_1,…,expert_m`).
    #[arg(long)]
    pub experts: PathBuf,
    #[arg(long)]
    pub row: PathBuf,
    /// Use only the first `m` expert columns.
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(subcommand)]
    pub experiment: Experiment,
    /// Master seed; required so every report is reproducible.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub reps: Option<u64>,
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, global = true, default_value = "json")]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct StreamArgs {
    #[arg(long, default_value_t = 50)]
    pub batches: usize,
    /// Calibration scores per batch.
    #[arg(long, default_value_t = 100)]
    pub n: usize,
    /// Draw each batch size uniformly from `min:max` instead of `--n`.
    #[arg(long)]
    pub batch_range: Option<String>,
    /// `exponential:RATE`, `lognormal:MU:SIGMA`, `pareto:SCALE:SHAPE` or `constant:VALUE`.
    #[arg(long, default_value = "exponential:1")]
    pub dist: String,
    /// Amplitude of a sinusoidal across-batch scale shift, in [0, 1).
    #[arg(long, default_value_t = 0.0)]
    pub shift: f64,
}

#[derive(Debug, Subcommand)]
pub enum Experiment {
    /// Batch anytime-valid sets with one betting strategy.
    Bav {
        #[arg(long, default_value_t = 0.1)]
        alpha: f64,
        #[command(flatten)]
        stream: StreamArgs,
        #[arg(long, value_enum, default_value = "all-in")]
        strategy: StrategyArg,
        #[arg(long, default_value_t = DEFAULT_GAMMA)]
        gamma: f64,
    },
    /// Ville violation rate and joint coverage of both strategies.
    Ville {
        #[arg(long, default_value_t = 0.1)]
        alpha: f64,
        #[command(flatten)]
        stream: StreamArgs,
        #[arg(long, default_value_t = DEFAULT_GAMMA)]
        gamma: f64,
    },
    /// Independent split conformal sets per batch over the naive horizon.
    NaiveSequential {
        #[arg(long, default_value_t = 0.15)]
        alpha: f64,
        #[arg(long, default_value_t = 13)]
        n: usize,
    },
    /// Fixed-level e-set and split conformal set on one calibration block.
    SingleBlock {
        #[arg(long, default_value_t = 0.2)]
        alpha: f64,
        #[arg(long, default_value_t = 100)]
        n: usize,
        #[arg(long, default_value = "exponential:1")]
        dist: String,
    },
    /// Fixed-size sets on the synthetic classifier.
    Posthoc {
        #[arg(long = "C", visible_alias = "target-size", default_value_t = 3)]
        target_size: usize,
        #[arg(long, default_value = "0.01:0.30:0.01")]
        grid: String,
        #[arg(long, default_value_t = 200)]
        n: usize,
        #[arg(long, default_value_t = 10)]
        labels: usize,
    },
    /// Monte Carlo sets with `m` expert labels, alongside `m = 1`.
    Mccp {
        #[arg(long, default_value_t = 0.3)]
        alpha: f64,
        #[arg(long, default_value_t = 200)]
        n: usize,
        #[arg(long, default_value_t = 20)]
        m: usize,
        #[arg(long, default_value_t = 10)]
        labels: usize,
        /// Test examples per split.
        #[arg(long, default_value_t = 500)]
        test_size: usize,
    },
}

/// Parses `args` (program name first), runs the command and returns the exit
/// status. Results go to `stdout` or files, diagnostics to `stderr`.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() { stderr.write_all(text.as_bytes()) } else { stdout.write_all(text.as_bytes()) };
            return code;
        }
    };
    match dispatch(cli.command, stdout) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            match e {
                Error::Infeasible { .. } => EXIT_INFEASIBLE,
                _ => EXIT_INPUT,
            }
        }
    }
}

fn dispatch(command: Command, stdout: &mut dyn Write) -> Result<()> {
    match command {
        Command::Baseline(a) => cmd_baseline(&a, stdout),
        Command::Bav(a) => cmd_bav(&a, stdout),
        Command::Posthoc(a) => cmd_posthoc(&a, stdout),
        Command::Mccp(a) => cmd_mccp(&a, stdout),
        Command::Simulate(a) => cmd_simulate(a, stdout),
    }
}

fn emit(out: Option<&Path>, contents: &str, stdout: &mut dyn Write) -> Result<()> {
    match out {
        Some(path) => write_atomic(path, contents.as_bytes()),
        None => stdout
            .write_all(contents.as_bytes())
            .map_err(|source| Error::Io { path: PathBuf::from("<stdout>"), source }),
    }
}

fn pretty(value: &Value) -> Result<String> {
    Ok(serde_json::to_string_pretty(value)? + "\n")
}

fn set_json(threshold: Threshold, row: &CandidateRow) -> Value {
    json!({ "threshold": threshold, "set": row.names(&threshold.select(row.row.values())) })
}

fn strategy(arg: StrategyArg, gamma: f64) -> Result<Strategy> {
    let s = match arg {
        StrategyArg::AllIn => Strategy::AllIn,
        StrategyArg::Grapa => Strategy::Grapa { gamma },
    };
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(domain(format!("gamma must lie in (0, 1], got {gamma}")));
    }
    s.validate()?;
    Ok(s)
}

pub fn cmd_baseline(args: &BaselineArgs, stdout: &mut dyn Write) -> Result<()> {
    crate::error::check_alpha(args.alpha)?;
    let calib = read_scores(&args.calib)?.flatten()?;
    let row = read_candidate_row(&args.row)?;
    let threshold = p_conformal_threshold(&calib, args.alpha)?;
    let text = match args.format {
        Format::Json => {
            let mut v = set_json(threshold, &row);
            v["alpha"] = json!(args.alpha);
            pretty(&v)?
        }
        Format::Csv => {
            let mut s = String::from("label\n");
            for name in row.names(&threshold.select(row.row.values())) {
                s.push_str(&name);
                s.push('\n');
            }
            s
        }
    };
    emit(args.out.as_deref(), &text, stdout)
}

pub fn cmd_bav(args: &BavArgs, stdout: &mut dyn Write) -> Result<()> {
    crate::error::check_alpha(args.alpha)?;
    let strategy = strategy(args.strategy, args.gamma)?;
    let batches = read_batch_stream(&args.stream)?;
    let mut state = MartingaleState::new();
    let mut rows = Vec::with_capacity(batches.len());
    let mut max_log_wealth = 0.0f64;
    for b in &batches {
        let (outcome, next) = process_batch(state, &b.calib, b.test_score, args.alpha, strategy)?;
        state = next;
        max_log_wealth = max_log_wealth.max(state.log_wealth());
        rows.push((outcome, state.log_wealth()));
    }
    let covered = rows.iter().filter(|r| r.0.covered).count();
    let summary = json!({
        "alpha": args.alpha,
        "strategy": strategy,
        "batches": rows.len(),
        "covered_batches": covered,
        "all_covered": covered == rows.len(),
        "final_log_wealth": finite_or_null(state.log_wealth()),
        "max_log_wealth": max_log_wealth,
        "ville_crossed": max_log_wealth >= -args.alpha.ln(),
        "bankrupt": state.is_bankrupt(),
    });
    emit(args.out.as_deref(), &martingale_csv(&rows), stdout)?;
    match (&args.summary, &args.out) {
        (Some(path), _) => write_atomic(path, pretty(&summary)?.as_bytes()),
        (None, Some(_)) => emit(None, &pretty(&summary)?, stdout),
        (None, None) => Ok(()),
    }
}

fn finite_or_null(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else {
        Value::Null
    }
}

pub fn cmd_posthoc(args: &PosthocArgs, stdout: &mut dyn Write) -> Result<()> {
    let grid = AlphaGrid::parse(&args.grid)?;
    let calib = read_scores(&args.calib)?.flatten()?;
    let row = read_candidate_row(&args.row)?;
    match fixed_size_set(&calib, &row.row, args.target_size, &grid) {
        Ok((selection, set)) => {
            if let Some(path) = &args.profile_out {
                write_atomic(path, profile_csv(&selection.profile).as_bytes())?;
            }
            let v = selection_json(&selection, &row.names(&set));
            emit(args.out.as_deref(), &pretty(&v)?, stdout)
        }
        Err(Error::Infeasible { target_size, profile }) => {
            if let Some(path) = &args.profile_out {
                write_atomic(path, profile_csv(&profile).as_bytes())?;
            }
            Err(Error::Infeasible { target_size, profile })
        }
        Err(e) => Err(e),
    }
}

pub fn cmd_mccp(args: &MccpArgs, stdout: &mut dyn Write) -> Result<()> {
    crate::error::check_alpha(args.alpha)?;
    let mut matrix = read_expert_matrix(&args.experts)?;
    if let Some(m) = args.m {
        matrix = matrix.first_experts(m)?;
    }
    let row = read_candidate_row(&args.row)?;
    let v = json!({
        "alpha": args.alpha,
        "n": matrix.n(),
        "m": matrix.m(),
        "p_variant": set_json(mc_p_threshold(&matrix, args.alpha)?, &row),
        "e_variant": set_json(mc_e_threshold(&matrix, args.alpha)?, &row),
    });
    emit(args.out.as_deref(), &pretty(&v)?, stdout)
}

/// Parses `family:param[:param]` into a score distribution.
pub fn parse_dist(spec: &str) -> Result<ScoreDistribution> {
    let parts: Vec<&str> = spec.split(':').collect();
    let nums = parts[1..]
        .iter()
        .map(|s| s.trim().parse::<f64>().map_err(|_| domain(format!("invalid number {s:?} in {spec:?}"))))
        .collect::<Result<Vec<_>>>()?;
    let d = match (parts[0], nums.as_slice()) {
        ("exponential", [rate]) => ScoreDistribution::Exponential { rate: *rate },
        ("lognormal", [mu, sigma]) => ScoreDistribution::LogNormal { mu: *mu, sigma: *sigma },
        ("pareto", [scale, shape]) => ScoreDistribution::Pareto { scale: *scale, shape: *shape },
        ("constant", [value]) => ScoreDistribution::Constant { value: *value },
        _ => return Err(domain(format!("unknown distribution {spec:?}"))),
    };
    d.validate()?;
    Ok(d)
}

fn parse_range(spec: &str) -> Result<BatchSize> {
    let bad = || domain(format!("batch range must be min:max, got {spec:?}"));
    let (a, b) = spec.split_once(':').ok_or_else(bad)?;
    let min = a.trim().parse().map_err(|_| bad())?;
    let max = b.trim().parse().map_err(|_| bad())?;
    Ok(BatchSize::Uniform { min, max })
}

fn batch_spec(s: &StreamArgs) -> Result<BatchSpec> {
    let mut spec = BatchSpec::fixed(s.batches, s.n, parse_dist(&s.dist)?);
    if let Some(r) = &s.batch_range {
        spec.batch_size = parse_range(r)?;
    }
    if s.shift != 0.0 {
        spec = spec.with_shift(Shift::Sinusoidal { amplitude: s.shift });
    }
    spec.validate()?;
    Ok(spec)
}

pub fn cmd_simulate(args: SimulateArgs, stdout: &mut dyn Write) -> Result<()> {
    let seed = args.seed.ok_or_else(|| domain("simulate requires --seed"))?;
    let reps = args.reps;
    let reports: Vec<CoverageReport> = match args.experiment {
        Experiment::Bav { alpha, stream, strategy: s, gamma } => {
            vec![run_bav_experiment(&batch_spec(&stream)?, alpha, strategy(s, gamma)?, reps.unwrap_or(1000), seed)?]
        }
        Experiment::Ville { alpha, stream, gamma } => {
            let spec = batch_spec(&stream)?;
            let reps = reps.unwrap_or(1000);
            vec![
                run_bav_experiment(&spec, alpha, Strategy::AllIn, reps, seed)?,
                run_bav_experiment(&spec, alpha, strategy(StrategyArg::Grapa, gamma)?, reps, seed)?,
            ]
        }
        Experiment::NaiveSequential { alpha, n } => vec![run_naive_sequential(alpha, n, reps.unwrap_or(10_000), seed)?],
        Experiment::SingleBlock { alpha, n, dist } => {
            let (e, p) = run_single_block_experiment(&parse_dist(&dist)?, n, alpha, reps.unwrap_or(10_000), seed)?;
            vec![e, p]
        }
        Experiment::Posthoc { target_size, grid, n, labels } => {
            let config = PosthocConfig::new(n, labels, target_size, AlphaGrid::parse(&grid)?);
            vec![run_posthoc_experiment(&config, reps.unwrap_or(1000), seed)?]
        }
        Experiment::Mccp { alpha, n, m, labels, test_size } => {
            let splits = reps.unwrap_or(100);
            let mut out = Vec::with_capacity(4);
            for mm in [m, 1] {
                let mut config = MccpConfig::new(n, mm, labels, alpha);
                config.test_size = test_size;
                let r = run_mccp_experiment(&config, splits, seed)?;
                out.push(r.p_variant);
                out.push(r.e_variant);
            }
            out
        }
    };
    let text = match args.format {
        Format::Json => pretty(&serde_json::to_value(&reports)?)?,
        Format::Csv => {
            let mut s = String::new();
            for (i, r) in reports.iter().enumerate() {
                let csv = r.to_csv();
                // keep a single header row
                let body = if i == 0 { csv.as_str() } else { csv.split_once('\n').map_or("", |x| x.1) };
                s.push_str(body);
            }
            s
        }
    };
    emit(args.out.as_deref(), &text, stdout)
}
