use rand::{Rng, RngCore};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{EnvSpec, Environment, Transition};
use crate::error::{invalid, Result};

/// Scalar linear-quadratic-Gaussian regulator `x' = x + a + v`,
/// reward `-(0.9 x² + 0.9 a²)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LqgConfig {
    pub state_bound: f64,
    pub action_bound: f64,
    /// Variance of the additive transition noise `v`.
    pub noise_variance: f64,
    pub state_cost: f64,
    pub action_cost: f64,
    pub horizon: usize,
    pub gamma: f64,
}

impl Default for LqgConfig {
    fn default() -> Self {
        Self {
            state_bound: 4.0,
            action_bound: 1.0,
            noise_variance: 0.5,
            state_cost: 0.9,
            action_cost: 0.9,
            horizon: 100,
            gamma: 0.99,
        }
    }
}

pub fn lqg_step<R: Rng + ?Sized>(state: f64, action: f64, config: &LqgConfig, rng: &mut R) -> Transition {
    let noise = if config.noise_variance > 0.0 {
        let z: f64 = StandardNormal.sample(rng);
        z * config.noise_variance.sqrt()
    } else {
        0.0
    };
    let next = (state + action + noise).clamp(-config.state_bound, config.state_bound);
    Transition {
        state: vec![state],
        action: vec![action],
        reward: -(config.state_cost * state * state + config.action_cost * action * action),
        next_state: vec![next],
        terminal: false,
    }
}

#[derive(Debug, Clone)]
pub struct Lqg {
    config: LqgConfig,
    spec: EnvSpec,
    state: [f64; 1],
}

impl Lqg {
    pub fn new(config: LqgConfig) -> Result<Self> {
        if !(config.state_bound > 0.0 && config.action_bound > 0.0 && config.noise_variance >= 0.0) {
            return Err(invalid("lqg bounds must be positive and noise variance non-negative"));
        }
        let (xb, ab) = (config.state_bound, config.action_bound);
        let spec = EnvSpec {
            name: "lqg".into(),
            state_low: vec![-xb],
            state_high: vec![xb],
            action_low: vec![-ab],
            action_high: vec![ab],
            gamma: config.gamma,
            horizon: config.horizon,
            r_min: -(config.state_cost * xb * xb + config.action_cost * ab * ab),
            r_max: 0.0,
        };
        spec.validate()?;
        Ok(Self { config, spec, state: [0.0] })
    }
}

impl Environment for Lqg {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    /// Starts at one of the two borders of the state interval.
    fn reset(&mut self, rng: &mut dyn RngCore) -> Result<Vec<f64>> {
        let b = self.config.state_bound;
        self.state = [if rng.gen::<bool>() { b } else { -b }];
        Ok(self.state.to_vec())
    }

    fn step(&mut self, action: &[f64], rng: &mut dyn RngCore) -> Result<Transition> {
        let t = lqg_step(self.state[0], action[0], &self.config, rng);
        self.state = [t.next_state[0]];
        Ok(t)
    }

    fn state(&self) -> &[f64] {
        &self.state
    }

    fn set_state(&mut self, state: &[f64]) -> Result<()> {
        let b = self.config.state_bound;
        match state {
            [x] if (-b..=b).contains(x) => {
                self.state = [*x];
                Ok(())
            }
            _ => Err(invalid(format!("lqg state {state:?} outside [-{b}, {b}]"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn noiseless() -> LqgConfig {
        LqgConfig { noise_variance: 0.0, ..LqgConfig::default() }
    }

    #[test]
    fn deterministic_dynamics() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let t = lqg_step(1.0, -1.0, &noiseless(), &mut rng);
        assert_eq!(t.next_state, vec![0.0]);
        assert!((t.reward + 1.8).abs() < 1e-15);
        let t = lqg_step(0.0, 0.0, &noiseless(), &mut rng);
        assert_eq!((t.next_state[0], t.reward), (0.0, 0.0));
        assert!(!t.terminal);
    }

    #[test]
    fn noise_variance_is_half() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let cfg = LqgConfig::default();
        let n = 1_000_000;
        let (mut s1, mut s2) = (0.0, 0.0);
        for _ in 0..n {
            let x = lqg_step(0.0, 0.0, &cfg, &mut rng).next_state[0];
            s1 += x;
            s2 += x * x;
        }
        let mean = s1 / n as f64;
        let var = s2 / n as f64 - mean * mean;
        assert!((var - 0.5).abs() < 0.005, "{var}");
    }

    #[test]
    fn resets_on_borders() {
        let mut env = Lqg::new(LqgConfig::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut plus = 0;
        for _ in 0..10_000 {
            let s = env.reset(&mut rng).unwrap()[0];
            assert!(s == 4.0 || s == -4.0);
            plus += (s > 0.0) as usize;
        }
        assert!((4_800..5_200).contains(&plus));
    }

    #[test]
    fn rewards_within_declared_range() {
        let mut env = Lqg::new(LqgConfig::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        env.reset(&mut rng).unwrap();
        let (lo, hi) = (env.spec().r_min, env.spec().r_max);
        for _ in 0..10_000 {
            let a = rng.gen_range(-1.0..=1.0);
            let t = env.step(&[a], &mut rng).unwrap();
            assert!(t.reward >= lo && t.reward <= hi);
        }
    }
}
