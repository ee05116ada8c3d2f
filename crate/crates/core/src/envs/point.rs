use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use super::maze::MazeLayout;
use super::{EnvSpec, Environment, Transition};
use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RewardKind {
    /// Negative Euclidean distance to the goal center.
    Dense,
    /// `-1` per step until the goal is reached.
    Sparse,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PointConfig {
    /// `builtin:1`..`builtin:4` or a path to a layout file.
    pub layout: String,
    pub reward: RewardKind,
    pub dt: f64,
    pub force_gain: f64,
    pub damping: f64,
    /// Per-axis speed limit.
    pub max_speed: f64,
    pub horizon: usize,
    pub gamma: f64,
}

impl Default for PointConfig {
    fn default() -> Self {
        Self {
            layout: "builtin:1".into(),
            reward: RewardKind::Dense,
            dt: 0.1,
            force_gain: 1.0,
            damping: 0.05,
            max_speed: 2.0,
            horizon: 300,
            gamma: 0.99,
        }
    }
}

/// Sweeps a point from `from` to `to` along one axis at fixed cross
/// coordinate, stopping at the first wall face or the bounds.
fn sweep_axis(layout: &MazeLayout, axis: usize, from: f64, to: f64, cross: f64) -> (f64, bool) {
    let (lo_b, hi_b) =
        if axis == 0 { (layout.bounds.x, layout.bounds.x_max()) } else { (layout.bounds.y, layout.bounds.y_max()) };
    let mut target = to;
    let mut blocked = false;
    if target < lo_b {
        target = lo_b;
        blocked = true;
    } else if target > hi_b {
        target = hi_b;
        blocked = true;
    }
    for w in &layout.walls {
        let (w_lo, w_hi, c_lo, c_hi) =
            if axis == 0 { (w.x, w.x_max(), w.y, w.y_max()) } else { (w.y, w.y_max(), w.x, w.x_max()) };
        if !(cross > c_lo && cross < c_hi) {
            continue;
        }
        if target > from && from <= w_lo && target > w_lo {
            target = w_lo;
            blocked = true;
        } else if target < from && from >= w_hi && target < w_hi {
            target = w_hi;
            blocked = true;
        }
    }
    (target, blocked)
}

/// Semi-implicit Euler step of a damped point mass with wall contact.
///
/// `state = [x, y, vx, vy]`, `action = [fx, fy]` in `[-1, 1]²`. On contact
/// the position stops at the wall face and the blocked velocity component is
/// zeroed.
pub fn point_step(state: &[f64], action: &[f64], layout: &MazeLayout, config: &PointConfig) -> Result<Transition> {
    if state.len() != 4 || action.len() != 2 {
        return Err(invalid("point state is [x, y, vx, vy] and action is [fx, fy]"));
    }
    let pos = [state[0], state[1]];
    if layout.in_wall(pos) || !layout.bounds.contains_closed(pos) {
        return Err(invalid(format!("point position {pos:?} is inside a wall or out of bounds")));
    }
    let mut vel = [0.0; 2];
    for i in 0..2 {
        let v = state[2 + i];
        let accel = config.force_gain * action[i] - config.damping * v;
        vel[i] = (v + config.dt * accel).clamp(-config.max_speed, config.max_speed);
    }
    let (x, bx) = sweep_axis(layout, 0, pos[0], pos[0] + config.dt * vel[0], pos[1]);
    if bx {
        vel[0] = 0.0;
    }
    let (y, by) = sweep_axis(layout, 1, pos[1], pos[1] + config.dt * vel[1], x);
    if by {
        vel[1] = 0.0;
    }
    let distance = layout.goal_distance([x, y]);
    let reward = match config.reward {
        RewardKind::Dense => -distance,
        RewardKind::Sparse => -1.0,
    };
    Ok(Transition {
        state: state.to_vec(),
        action: action.to_vec(),
        reward,
        next_state: vec![x, y, vel[0], vel[1]],
        terminal: distance < layout.goal_radius,
    })
}

#[derive(Debug, Clone)]
pub struct PointMaze {
    config: PointConfig,
    layout: MazeLayout,
    spec: EnvSpec,
    state: Vec<f64>,
}

impl PointMaze {
    pub fn new(config: PointConfig) -> Result<Self> {
        let layout = MazeLayout::resolve(&config.layout)?;
        Self::with_layout(config, layout)
    }

    pub fn with_layout(config: PointConfig, layout: MazeLayout) -> Result<Self> {
        layout.validate()?;
        if !(config.dt > 0.0 && config.max_speed > 0.0 && config.damping >= 0.0) {
            return Err(invalid("point dt and max_speed must be positive, damping non-negative"));
        }
        let b = layout.bounds;
        let vm = config.max_speed;
        let (r_min, r_max) = match config.reward {
            RewardKind::Dense => (-layout.diameter(), 0.0),
            // the absorbing goal contributes zero from then on
            RewardKind::Sparse => (-1.0, 0.0),
        };
        let spec = EnvSpec {
            name: format!("{}-{}", layout.name, if config.reward == RewardKind::Dense { "dense" } else { "sparse" }),
            state_low: vec![b.x, b.y, -vm, -vm],
            state_high: vec![b.x_max(), b.y_max(), vm, vm],
            action_low: vec![-1.0, -1.0],
            action_high: vec![1.0, 1.0],
            gamma: config.gamma,
            horizon: config.horizon,
            r_min,
            r_max,
        };
        spec.validate()?;
        let start = vec![layout.start_region.x, layout.start_region.y, 0.0, 0.0];
        Ok(Self { config, layout, spec, state: start })
    }

    pub fn layout(&self) -> &MazeLayout {
        &self.layout
    }
}

impl Environment for PointMaze {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, rng: &mut dyn RngCore) -> Result<Vec<f64>> {
        let r = self.layout.start_region;
        let x = r.x + rng.gen::<f64>() * r.width;
        let y = r.y + rng.gen::<f64>() * r.height;
        self.set_state(&[x, y, 0.0, 0.0])?;
        Ok(self.state.clone())
    }

    fn step(&mut self, action: &[f64], _rng: &mut dyn RngCore) -> Result<Transition> {
        let t = point_step(&self.state, action, &self.layout, &self.config)?;
        self.state = t.next_state.clone();
        Ok(t)
    }

    fn state(&self) -> &[f64] {
        &self.state
    }

    /// Places the agent at `state`, rejecting positions inside walls.
    fn set_state(&mut self, state: &[f64]) -> Result<()> {
        if state.len() != 4 {
            return Err(invalid(format!("point state {state:?} is not [x, y, vx, vy]")));
        }
        let p = [state[0], state[1]];
        if self.layout.in_wall(p) || !self.layout.bounds.contains_closed(p) {
            return Err(invalid(format!("start {state:?} is inside a wall or out of bounds")));
        }
        self.state = state.to_vec();
        Ok(())
    }
}
