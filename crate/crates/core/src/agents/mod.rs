//! WAC, SAC and OAC learners and the per-epoch training loop.

mod agent;
mod config;
mod critic;
pub mod losses;
mod oac;
mod policy;
mod trainer;

pub use agent::{Agent, AgentState, CriticsState, IterationStats};
pub use config::{AgentConfig, Algorithm, AlphaMode, OacConfig, WacConfig};
pub use critic::{softplus_inverse, CriticSnapshot, DistributionalCritic, SigmaSnapshot};
pub use losses::{ActorLoss, Batch, CriticTargets};
pub use oac::{oac_exploration_action, oac_shift, OacShift};
pub use policy::{squash, PolicyOutput, PolicySample, SquashedGaussianPolicy, LOG_STD_MAX, LOG_STD_MIN};
pub use trainer::{Checkpoint, TrainConfig, Trainer, CHECKPOINT_VERSION};
