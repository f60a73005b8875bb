//! Synthetic data generators and Monte Carlo drivers that check every
//! coverage guarantee on simulated data.
//!
//! All randomness flows from a master seed: repetition `r` uses its own
//! ChaCha stream ([`substream`]), so reports are bit-identical for a given
//! seed regardless of how repetitions are scheduled.

mod batches;
pub mod classifier;
mod dist;
mod labels;

pub use batches::{
    naive_batch_spec, naive_horizon, run_bav_experiment, run_naive_sequential, run_single_block_experiment,
    ville_violation_rate, BatchSize, BatchSpec, Shift,
};
pub use classifier::{ClassifierModel, LabelScore};
pub use dist::{gen_exchangeable_scores, substream, ScoreDistribution};
pub use labels::{run_mccp_experiment, run_posthoc_experiment, MccpConfig, MccpReports, PosthocConfig};
