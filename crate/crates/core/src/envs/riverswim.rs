use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use super::{EnvSpec, Environment, Transition};
use crate::error::{invalid, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RiverswimConfig {
    pub max_state: f64,
    pub horizon: usize,
    pub gamma: f64,
}

impl Default for RiverswimConfig {
    fn default() -> Self {
        Self { max_state: 25.0, horizon: 100, gamma: 0.99 }
    }
}

/// `(P(d = -1), P(d = 0), P(d = +1))` for an action in `[-1, 1]`.
pub fn riverswim_direction_probs(action: f64) -> Result<(f64, f64, f64)> {
    if !(-1.0..=1.0).contains(&action) {
        return Err(invalid(format!("riverswim action {action} outside [-1, 1]")));
    }
    // rearranged so the corner actions give the tabulated values exactly
    Ok(if action <= 0.0 {
        (0.1 - 0.9 * action, 0.9 * (action + 1.0), 0.0)
    } else {
        (0.1, 0.6 + 0.3 * (1.0 - action), 0.3 * action)
    })
}

fn reward(state: f64, action: f64, max_state: f64) -> f64 {
    if state <= 1.0 {
        5e-4
    } else if state >= max_state - 1.0 && action > 0.0 {
        1.0
    } else {
        0.0
    }
}

/// One stochastic Riverswim step from `state`.
pub fn riverswim_step<R: Rng + ?Sized>(state: f64, action: f64, max_state: f64, rng: &mut R) -> Result<Transition> {
    let (left, stay, _) = riverswim_direction_probs(action)?;
    let u: f64 = rng.gen();
    let direction = if u < left {
        -1.0
    } else if u < left + stay {
        0.0
    } else {
        1.0
    };
    let next = (state + direction * action.abs()).clamp(0.0, max_state);
    Ok(Transition {
        state: vec![state],
        action: vec![action],
        reward: reward(state, action, max_state),
        next_state: vec![next],
        terminal: false,
    })
}

#[derive(Debug, Clone)]
pub struct Riverswim {
    config: RiverswimConfig,
    spec: EnvSpec,
    state: [f64; 1],
}

impl Riverswim {
    pub fn new(config: RiverswimConfig) -> Result<Self> {
        if !(config.max_state > 1.0) {
            return Err(invalid("riverswim max_state must exceed 1"));
        }
        let spec = EnvSpec {
            name: "riverswim".into(),
            state_low: vec![0.0],
            state_high: vec![config.max_state],
            action_low: vec![-1.0],
            action_high: vec![1.0],
            gamma: config.gamma,
            horizon: config.horizon,
            r_min: 0.0,
            r_max: 1.0,
        };
        spec.validate()?;
        Ok(Self { config, spec, state: [0.0] })
    }
}

impl Environment for Riverswim {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, rng: &mut dyn RngCore) -> Result<Vec<f64>> {
        self.state = [rng.gen_range(0.0..=0.5)];
        Ok(self.state.to_vec())
    }

    fn step(&mut self, action: &[f64], rng: &mut dyn RngCore) -> Result<Transition> {
        let t = riverswim_step(self.state[0], action[0], self.config.max_state, rng)?;
        self.state = [t.next_state[0]];
        Ok(t)
    }

    fn state(&self) -> &[f64] {
        &self.state
    }

    fn set_state(&mut self, state: &[f64]) -> Result<()> {
        let m = self.config.max_state;
        match state {
            [x] if (0.0..=m).contains(x) => {
                self.state = [*x];
                Ok(())
            }
            _ => Err(invalid(format!("riverswim state {state:?} outside [0, {m}]"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn probabilities_at_reference_actions() {
        let close = |a: (f64, f64, f64), b: (f64, f64, f64)| {
            (a.0 - b.0).abs() < 1e-15 && (a.1 - b.1).abs() < 1e-15 && (a.2 - b.2).abs() < 1e-15
        };
        assert!(close(riverswim_direction_probs(0.0).unwrap(), (0.1, 0.9, 0.0)));
        assert!(close(riverswim_direction_probs(1.0).unwrap(), (0.1, 0.6, 0.3)));
        assert!(close(riverswim_direction_probs(-1.0).unwrap(), (1.0, 0.0, 0.0)));
        assert!(riverswim_direction_probs(1.01).is_err());
    }

    #[test]
    fn probabilities_form_a_distribution() {
        for i in 0..=10_000 {
            let a = -1.0 + 2.0 * i as f64 / 10_000.0;
            let (l, s, r) = riverswim_direction_probs(a).unwrap();
            assert!((l + s + r - 1.0).abs() < 1e-12);
            for p in [l, s, r] {
                assert!((0.0..=1.0).contains(&p), "{a}: {p}");
            }
        }
    }

    #[test]
    fn left_clip_and_small_reward() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..100 {
            let t = riverswim_step(0.5, -1.0, 25.0, &mut rng).unwrap();
            assert_eq!(t.next_state, vec![0.0]);
            assert_eq!(t.reward, 5e-4);
            assert!(!t.terminal);
        }
    }

    #[test]
    fn right_end_reward() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut saw_stay = false;
        for _ in 0..200 {
            let t = riverswim_step(24.5, 1.0, 25.0, &mut rng).unwrap();
            assert_eq!(t.reward, 1.0);
            if t.next_state[0] == 24.5 {
                saw_stay = true;
            }
        }
        assert!(saw_stay);
    }

    #[test]
    fn reset_distribution() {
        let mut env = Riverswim::new(RiverswimConfig::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 1_000_000;
        let (mut lo, mut hi, mut sum) = (f64::MAX, f64::MIN, 0.0);
        for _ in 0..n {
            let s = env.reset(&mut rng).unwrap()[0];
            lo = lo.min(s);
            hi = hi.max(s);
            sum += s;
        }
        let mean = sum / n as f64;
        // uniform on [0, 0.5]: sd of the mean = 0.5 / sqrt(12 n)
        let se = 0.5 / (12.0 * n as f64).sqrt();
        assert!(lo >= 0.0 && hi <= 0.5);
        assert!((mean - 0.25).abs() < 5.0 * se, "{mean}");
    }
}
