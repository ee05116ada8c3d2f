//! Benchmark environments: one-dimensional LQG, continuous Riverswim and the
//! 2-D point-mass mazes, behind the [`Environment`] contract.
//!
//! Episodes are truncated by the runner after `EnvSpec::horizon` steps;
//! `Transition::terminal` is set only on genuine task termination.

mod lqg;
mod maze;
mod point;
mod riverswim;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

pub use lqg::{lqg_step, Lqg, LqgConfig};
pub use maze::{MazeLayout, Rect};
pub use point::{point_step, PointConfig, PointMaze, RewardKind};
pub use riverswim::{riverswim_direction_probs, riverswim_step, Riverswim, RiverswimConfig};

/// Static description of an environment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvSpec {
    pub name: String,
    pub state_low: Vec<f64>,
    pub state_high: Vec<f64>,
    pub action_low: Vec<f64>,
    pub action_high: Vec<f64>,
    pub gamma: f64,
    pub horizon: usize,
    pub r_min: f64,
    pub r_max: f64,
}

impl EnvSpec {
    pub fn state_dim(&self) -> usize {
        self.state_low.len()
    }

    pub fn action_dim(&self) -> usize {
        self.action_low.len()
    }

    /// Dimension of the joint normalized (state, action) cube.
    pub fn input_dim(&self) -> usize {
        self.state_dim() + self.action_dim()
    }

    pub fn validate(&self) -> Result<()> {
        if self.state_low.len() != self.state_high.len() || self.action_low.len() != self.action_high.len() {
            return Err(invalid(format!("{}: bound vectors differ in length", self.name)));
        }
        let all_lo = self.state_low.iter().chain(&self.action_low);
        let all_hi = self.state_high.iter().chain(&self.action_high);
        if all_lo.zip(all_hi).any(|(lo, hi)| !(lo < hi)) {
            return Err(invalid(format!("{}: every low bound must be below its high bound", self.name)));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(invalid(format!("{}: gamma {} outside [0, 1)", self.name, self.gamma)));
        }
        if self.horizon == 0 {
            return Err(invalid(format!("{}: horizon must be at least 1", self.name)));
        }
        if !(self.r_min <= self.r_max) {
            return Err(invalid(format!("{}: r_min exceeds r_max", self.name)));
        }
        Ok(())
    }

    /// Affine map of `(state, action)` onto `[-1, 1]^(nS + nA)`.
    ///
    /// Out-of-bounds coordinates are clipped with a logged warning.
    pub fn normalize(&self, state: &[f64], action: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.input_dim());
        let lows = self.state_low.iter().chain(&self.action_low);
        let highs = self.state_high.iter().chain(&self.action_high);
        for ((v, lo), hi) in state.iter().chain(action).zip(lows).zip(highs) {
            let z = 2.0 * (v - lo) / (hi - lo) - 1.0;
            if !(-1.0..=1.0).contains(&z) {
                log::warn!("{}: coordinate {v} outside [{lo}, {hi}], clipping", self.name);
            }
            out.push(z.clamp(-1.0, 1.0));
        }
        out
    }

    pub fn normalize_state(&self, state: &[f64]) -> Vec<f64> {
        state
            .iter()
            .zip(self.state_low.iter().zip(&self.state_high))
            .map(|(v, (lo, hi))| (2.0 * (v - lo) / (hi - lo) - 1.0).clamp(-1.0, 1.0))
            .collect()
    }

    /// Inverse of [`EnvSpec::normalize`], split into `(state, action)`.
    pub fn denormalize(&self, point: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let lows = self.state_low.iter().chain(&self.action_low);
        let highs = self.state_high.iter().chain(&self.action_high);
        let raw: Vec<f64> =
            point.iter().zip(lows.zip(highs)).map(|(z, (lo, hi))| lo + (z + 1.0) * 0.5 * (hi - lo)).collect();
        let (s, a) = raw.split_at(self.state_dim());
        (s.to_vec(), a.to_vec())
    }

    /// Maps a squashed action in `[-1, 1]^nA` onto the action bounds.
    pub fn scale_action(&self, squashed: &[f64]) -> Vec<f64> {
        squashed
            .iter()
            .zip(self.action_low.iter().zip(&self.action_high))
            .map(|(u, (lo, hi))| lo + (u + 1.0) * 0.5 * (hi - lo))
            .collect()
    }
}

/// One environment interaction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: Vec<f64>,
    pub reward: f64,
    pub next_state: Vec<f64>,
    pub terminal: bool,
}

/// A simulator that owns its current state.
pub trait Environment: Send {
    fn spec(&self) -> &EnvSpec;

    /// Samples an initial state and makes it current.
    fn reset(&mut self, rng: &mut dyn RngCore) -> Result<Vec<f64>>;

    /// Applies `action` (in environment units) to the current state.
    fn step(&mut self, action: &[f64], rng: &mut dyn RngCore) -> Result<Transition>;

    fn state(&self) -> &[f64];

    /// Makes `state` current, rejecting states outside the domain.
    fn set_state(&mut self, state: &[f64]) -> Result<()>;
}

/// Environment families selectable by name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum EnvConfig {
    Lqg(LqgConfig),
    Riverswim(RiverswimConfig),
    Point(PointConfig),
}

impl EnvConfig {
    /// Defaults for `lqg`, `riverswim`, `point1`..`point4` and their
    /// `-sparse` variants.
    pub fn by_name(name: &str) -> Result<Self> {
        let (base, sparse) = match name.strip_suffix("-sparse") {
            Some(b) => (b, true),
            None => (name, false),
        };
        Ok(match base {
            "lqg" if !sparse => EnvConfig::Lqg(LqgConfig::default()),
            "riverswim" if !sparse => EnvConfig::Riverswim(RiverswimConfig::default()),
            "point1" | "point2" | "point3" | "point4" => {
                let idx = base[5..].parse::<usize>().expect("matched digit");
                EnvConfig::Point(PointConfig {
                    layout: format!("builtin:{idx}"),
                    reward: if sparse { RewardKind::Sparse } else { RewardKind::Dense },
                    ..PointConfig::default()
                })
            }
            _ => return Err(invalid(format!("unknown environment `{name}`"))),
        })
    }

    pub fn build(&self) -> Result<Box<dyn Environment>> {
        Ok(match self {
            EnvConfig::Lqg(c) => Box::new(Lqg::new(c.clone())?),
            EnvConfig::Riverswim(c) => Box::new(Riverswim::new(c.clone())?),
            EnvConfig::Point(c) => Box::new(PointMaze::new(c.clone())?),
        })
    }
}
