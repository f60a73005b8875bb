//! Conformal e-prediction.
//!
//! Conformal sets built from e-values rather than ranks:
//!
//! * [`bav`]: batch anytime-valid sets from a test martingale of per-batch
//!   e-values, valid simultaneously over an unbounded stream of batches.
//! * [`posthoc`]: sets of at most `C` labels at a data-dependent level `α̃`,
//!   with post-hoc coverage guarantees.
//! * [`mccp`]: Monte Carlo conformal prediction when each calibration example
//!   carries several expert labels.
//!
//! [`pcp`] holds the split conformal baseline and [`sim`] the Monte Carlo
//! harness that checks every guarantee on synthetic data. The `econformal`
//! binary exposes all of it on the command line (see [`cli`]).

pub mod bav;
pub mod cli;
pub mod error;
pub mod evalue;
pub mod io;
pub mod mccp;
pub mod pcp;
pub mod posthoc;
pub mod report;
pub mod scores;
pub mod sim;
pub mod threshold;

pub use error::{Error, Result};
pub use evalue::{EValue, PValue};
pub use scores::{LabelScoreRow, ScoreVector};
pub use threshold::Threshold;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/scores.md")]
    mod scores {}
    #[doc = include_str!("../../../book/src/e-values.md")]
    mod e_values {}
    #[doc = include_str!("../../../book/src/split-conformal.md")]
    mod split_conformal {}
    #[doc = include_str!("../../../book/src/anytime-valid.md")]
    mod anytime_valid {}
    #[doc = include_str!("../../../book/src/fixed-size.md")]
    mod fixed_size {}
    #[doc = include_str!("../../../book/src/ambiguous-labels.md")]
    mod ambiguous_labels {}
    #[doc = include_str!("../../../book/src/simulation.md")]
    mod simulation {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
