//! Gaussian-process bandits with an entropy-thresholded posterior.
//!
//! An observation joins the posterior only when its conditional entropy
//! under the current model exceeds a threshold ε, so the dictionary stays
//! small while the usual UCB/EI/MPI selection rules run on top of it.

pub mod acquisition;
pub mod bandit;
pub mod error;
pub mod gp;
pub mod harness;
pub mod kernel;
pub mod numfmt;
pub mod objectives;
pub mod oracle;

pub use acquisition::{AcquisitionKind, BetaSchedule};
pub use bandit::{BanditConfig, Policy, RunRecord};
pub use error::{Error, Result};
pub use gp::{GpPosterior, Prediction};
pub use kernel::{KernelFamily, KernelSpec};
pub use objectives::{CandidateSet, Objective};
