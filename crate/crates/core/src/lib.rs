//! Wasserstein actor-critic engine.
//!
//! Gaussian Q-posteriors trained with closed-form Wasserstein-2 losses, an
//! optimistic actor following the posterior upper quantile, and a
//! regularizer that anchors uncertainty away from the data. SAC and OAC
//! baselines, the benchmark environments, a tabular Wasserstein Q-learning
//! oracle and coverage metrics live alongside.

pub mod diff;
mod error;

pub use error::{Error, Result};
pub mod agents;
pub mod envs;
pub mod gaussq;
pub mod metrics;
pub mod replay;
pub mod tabular;
