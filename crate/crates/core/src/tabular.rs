//! Exact tabular Wasserstein Q-learning on small discrete MDPs, plus value
//! iteration as the ground truth.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::gaussq::{prior_std, std_normal_quantile, GaussianPosterior, ValueBounds};

/// Finite MDP with `P[s][a]` a distribution over next states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteMdp {
    pub n_states: usize,
    pub n_actions: usize,
    pub transitions: Vec<Vec<Vec<f64>>>,
    pub rewards: Vec<Vec<f64>>,
    pub gamma: f64,
    pub terminal: Vec<bool>,
    /// Initial-state distribution.
    pub initial: Vec<f64>,
    /// Episode length cap used by [`wql_run`].
    pub horizon: usize,
}

impl DiscreteMdp {
    pub fn validate(&self) -> Result<()> {
        let (ns, na) = (self.n_states, self.n_actions);
        if ns == 0 || na == 0 {
            return Err(invalid("mdp needs at least one state and action"));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(invalid(format!("gamma {} outside [0, 1)", self.gamma)));
        }
        if self.transitions.len() != ns
            || self.rewards.len() != ns
            || self.terminal.len() != ns
            || self.initial.len() != ns
        {
            return Err(invalid("mdp tables disagree with n_states"));
        }
        for s in 0..ns {
            if self.transitions[s].len() != na || self.rewards[s].len() != na {
                return Err(invalid(format!("state {s}: tables disagree with n_actions")));
            }
            for a in 0..na {
                let p = &self.transitions[s][a];
                if p.len() != ns || p.iter().any(|&x| x < 0.0) {
                    return Err(invalid(format!("P[{s}][{a}] is not a distribution over {ns} states")));
                }
                let total: f64 = p.iter().sum();
                if (total - 1.0).abs() > 1e-12 {
                    return Err(invalid(format!("P[{s}][{a}] sums to {total}")));
                }
            }
        }
        if (self.initial.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
            return Err(invalid("initial distribution does not sum to 1"));
        }
        if self.horizon == 0 {
            return Err(invalid("horizon must be at least 1"));
        }
        Ok(())
    }

    pub fn reward_bounds(&self) -> (f64, f64) {
        let all = self.rewards.iter().flatten();
        let lo = all.clone().fold(f64::INFINITY, |a, &b| a.min(b));
        let hi = all.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        (lo.min(0.0), hi.max(0.0))
    }

    pub fn value_bounds(&self) -> Result<ValueBounds> {
        let (lo, hi) = self.reward_bounds();
        ValueBounds::from_rewards(lo, hi, self.gamma)
    }

    fn sample_from<R: Rng + ?Sized>(dist: &[f64], rng: &mut R) -> usize {
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        for (i, p) in dist.iter().enumerate() {
            acc += p;
            if u < acc {
                return i;
            }
        }
        dist.iter().rposition(|&p| p > 0.0).unwrap_or(dist.len() - 1)
    }

    pub fn sample_next<R: Rng + ?Sized>(&self, s: usize, a: usize, rng: &mut R) -> usize {
        Self::sample_from(&self.transitions[s][a], rng)
    }

    pub fn sample_initial<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        Self::sample_from(&self.initial, rng)
    }
}

pub const LEFT: usize = 0;
pub const RIGHT: usize = 1;

/// Five-state Riverswim: `LEFT` drifts deterministically towards state 0,
/// which pays 0.005; `RIGHT` fights the current and pays 1 at the last state.
pub fn riverswim5() -> DiscreteMdp {
    let n = 5;
    let mut transitions = vec![vec![vec![0.0; n]; 2]; n];
    let mut rewards = vec![vec![0.0; 2]; n];
    for s in 0..n {
        transitions[s][LEFT][s.saturating_sub(1)] = 1.0;
        let right = &mut transitions[s][RIGHT];
        if s == 0 {
            right[0] = 0.6;
            right[1] = 0.4;
        } else if s == n - 1 {
            right[s] = 0.6;
            right[s - 1] = 0.4;
        } else {
            right[s - 1] = 0.05;
            right[s] = 0.6;
            right[s + 1] = 0.35;
        }
    }
    rewards[0][LEFT] = 0.005;
    rewards[n - 1][RIGHT] = 1.0;
    let mut initial = vec![0.0; n];
    initial[0] = 0.5;
    initial[1] = 0.5;
    DiscreteMdp {
        n_states: n,
        n_actions: 2,
        transitions,
        rewards,
        gamma: 0.9,
        terminal: vec![false; n],
        initial,
        horizon: 50,
    }
}

/// Per-pair Gaussian posteriors over Q-values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorTable {
    pub n_actions: usize,
    pub entries: Vec<GaussianPosterior>,
    pub visits: Vec<u64>,
}

impl PosteriorTable {
    /// Every pair starts at `N(midpoint, sigma0)` of the feasible Q-range.
    pub fn prior(mdp: &DiscreteMdp) -> Result<Self> {
        let bounds = mdp.value_bounds()?;
        let p = GaussianPosterior::new(bounds.midpoint(), prior_std(bounds))?;
        Ok(Self::filled(mdp.n_states, mdp.n_actions, p))
    }

    pub fn filled(n_states: usize, n_actions: usize, p: GaussianPosterior) -> Self {
        Self { n_actions, entries: vec![p; n_states * n_actions], visits: vec![0; n_states * n_actions] }
    }

    pub fn get(&self, s: usize, a: usize) -> GaussianPosterior {
        self.entries[s * self.n_actions + a]
    }

    pub fn set(&mut self, s: usize, a: usize, p: GaussianPosterior) {
        self.entries[s * self.n_actions + a] = p;
    }

    pub fn visits(&self, s: usize, a: usize) -> u64 {
        self.visits[s * self.n_actions + a]
    }

    /// `argmax_a mean`, lowest index on ties.
    pub fn greedy(&self, s: usize) -> usize {
        (0..self.n_actions).fold(0, |best, a| if self.get(s, a).mean > self.get(s, best).mean { a } else { best })
    }
}

/// Barycentric move of `(s, a)` towards `r + gamma * Q(s', a')`.
///
/// `next = None` marks a terminal transition, whose target is `N(r, 0)`.
pub fn wtd_update(
    table: &mut PosteriorTable,
    s: usize,
    a: usize,
    r: f64,
    gamma: f64,
    next: Option<(usize, usize)>,
    alpha: f64,
) -> Result<GaussianPosterior> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(invalid(format!("step size {alpha} outside [0, 1]")));
    }
    let target = match next {
        Some((s2, a2)) => table.get(s2, a2).affine(r, gamma),
        None => GaussianPosterior::dirac(r),
    };
    let cur = table.get(s, a);
    let new = GaussianPosterior {
        mean: (1.0 - alpha) * cur.mean + alpha * target.mean,
        std: (1.0 - alpha) * cur.std + alpha * target.std,
    };
    table.set(s, a, new);
    Ok(new)
}

/// Default step size `(1 / (1 + visits))^0.8`.
pub fn polynomial_lr(visits: u64) -> f64 {
    (1.0 / (1.0 + visits as f64)).powf(0.8)
}

/// Optimistic action: `argmax_a mean + z_delta * std`, ties uniform.
pub fn optimistic_action<R: Rng + ?Sized>(table: &PosteriorTable, s: usize, z: f64, rng: &mut R) -> usize {
    let u: Vec<f64> = (0..table.n_actions)
        .map(|a| {
            let p = table.get(s, a);
            p.mean + z * p.std
        })
        .collect();
    let best = u.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let ties: Vec<usize> = (0..u.len()).filter(|&a| u[a] == best).collect();
    ties[rng.gen_range(0..ties.len())]
}

/// Wasserstein Q-learning with optimistic behaviour and mean-greedy
/// bootstrap targets. `lr` maps the visit count of a pair (before the
/// update) to its step size. Returns the final
/// table and the undiscounted return of each episode.
pub fn wql_run<R: Rng + ?Sized>(
    mdp: &DiscreteMdp,
    episodes: usize,
    delta: f64,
    lr: impl Fn(u64) -> f64,
    rng: &mut R,
) -> Result<(PosteriorTable, Vec<f64>)> {
    mdp.validate()?;
    let z = std_normal_quantile(delta)?;
    let mut table = PosteriorTable::prior(mdp)?;
    let mut returns = Vec::with_capacity(episodes);
    for _ in 0..episodes {
        let mut s = mdp.sample_initial(rng);
        let mut a = optimistic_action(&table, s, z, rng);
        let mut ret = 0.0;
        for _ in 0..mdp.horizon {
            let r = mdp.rewards[s][a];
            ret += r;
            let s2 = mdp.sample_next(s, a, rng);
            let idx = s * mdp.n_actions + a;
            let alpha = lr(table.visits[idx]);
            if mdp.terminal[s2] {
                wtd_update(&mut table, s, a, r, mdp.gamma, None, alpha)?;
                table.visits[idx] += 1;
                break;
            }
            // bootstrap from the mean-greedy action, act optimistically
            let greedy = table.greedy(s2);
            wtd_update(&mut table, s, a, r, mdp.gamma, Some((s2, greedy)), alpha)?;
            table.visits[idx] += 1;
            s = s2;
            a = optimistic_action(&table, s2, z, rng);
        }
        returns.push(ret);
    }
    Ok((table, returns))
}

/// `Q*` by value iteration until the sup-norm Bellman residual is at most
/// `tolerance`. Terminal states have zero continuation value.
pub fn value_iteration(mdp: &DiscreteMdp, tolerance: f64) -> Result<Vec<Vec<f64>>> {
    mdp.validate()?;
    if !(tolerance > 0.0) {
        return Err(invalid("tolerance must be positive"));
    }
    let (ns, na) = (mdp.n_states, mdp.n_actions);
    let mut q = vec![vec![0.0; na]; ns];
    loop {
        let v: Vec<f64> = (0..ns)
            .map(|s| if mdp.terminal[s] { 0.0 } else { q[s].iter().cloned().fold(f64::NEG_INFINITY, f64::max) })
            .collect();
        let mut residual: f64 = 0.0;
        for s in 0..ns {
            for a in 0..na {
                let next: f64 = mdp.transitions[s][a].iter().zip(&v).map(|(p, v)| p * v).sum();
                let new = mdp.rewards[s][a] + mdp.gamma * next;
                residual = residual.max((new - q[s][a]).abs());
                q[s][a] = new;
            }
        }
        if residual <= tolerance * (1.0 - mdp.gamma) {
            return Ok(q);
        }
    }
}

/// Sup-norm Bellman optimality residual of `q`.
pub fn bellman_residual(mdp: &DiscreteMdp, q: &[Vec<f64>]) -> f64 {
    let v: Vec<f64> = (0..mdp.n_states)
        .map(|s| if mdp.terminal[s] { 0.0 } else { q[s].iter().cloned().fold(f64::NEG_INFINITY, f64::max) })
        .collect();
    let mut res: f64 = 0.0;
    for s in 0..mdp.n_states {
        for a in 0..mdp.n_actions {
            let next: f64 = mdp.transitions[s][a].iter().zip(&v).map(|(p, v)| p * v).sum();
            res = res.max((mdp.rewards[s][a] + mdp.gamma * next - q[s][a]).abs());
        }
    }
    res
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn single(r: f64, gamma: f64) -> DiscreteMdp {
        DiscreteMdp {
            n_states: 1,
            n_actions: 1,
            transitions: vec![vec![vec![1.0]]],
            rewards: vec![vec![r]],
            gamma,
            terminal: vec![false],
            initial: vec![1.0],
            horizon: 10,
        }
    }

    #[test]
    fn wtd_examples() {
        let mut t = PosteriorTable::filled(2, 1, GaussianPosterior { mean: 0.0, std: 2.0 });
        t.set(1, 0, GaussianPosterior { mean: 0.0, std: 1.0 });
        let before = t.get(0, 0);
        wtd_update(&mut t, 0, 0, 1.0, 0.9, Some((1, 0)), 0.0).unwrap();
        assert_eq!(t.get(0, 0), before);
        let p = wtd_update(&mut t, 0, 0, 1.0, 0.9, Some((1, 0)), 0.5).unwrap();
        assert!((p.mean - 0.5).abs() < 1e-15 && (p.std - 1.45).abs() < 1e-15);
        let p = wtd_update(&mut t, 0, 0, 3.0, 0.9, None, 1.0).unwrap();
        assert_eq!((p.mean, p.std), (3.0, 0.0));
        assert!(wtd_update(&mut t, 0, 0, 3.0, 0.9, None, 1.5).is_err());
    }

    #[test]
    fn single_state_fixed_point() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (t, _) = wql_run(&single(1.0, 0.0), 500, 0.95, polynomial_lr, &mut rng).unwrap();
        let p = t.get(0, 0);
        assert!((p.mean - 1.0).abs() < 1e-3, "{p:?}");
        assert!(p.std < 1e-3);
    }

    #[test]
    fn value_iteration_geometric() {
        let q = value_iteration(&single(1.0, 0.9), 1e-10).unwrap();
        assert!((q[0][0] - 10.0).abs() < 1e-9);
    }

    #[test]
    fn value_iteration_two_state_chain() {
        // s0 -a0-> s1 (r = 1), s0 -a1-> s0 (r = 0); s1 -> s1 (r = 2)
        let mdp = DiscreteMdp {
            n_states: 2,
            n_actions: 2,
            transitions: vec![vec![vec![0.0, 1.0], vec![1.0, 0.0]], vec![vec![0.0, 1.0], vec![0.0, 1.0]]],
            rewards: vec![vec![1.0, 0.0], vec![2.0, 2.0]],
            gamma: 0.5,
            terminal: vec![false, false],
            initial: vec![1.0, 0.0],
            horizon: 5,
        };
        let q = value_iteration(&mdp, 1e-12).unwrap();
        // V(s1) = 2 / (1 - 0.5) = 4; Q(s0, a0) = 1 + 0.5 * 4 = 3; Q(s0, a1) = 0.5 * 3
        assert!((q[1][0] - 4.0).abs() < 1e-9);
        assert!((q[0][0] - 3.0).abs() < 1e-9);
        assert!((q[0][1] - 1.5).abs() < 1e-9);
        assert!(bellman_residual(&mdp, &q) <= 1e-12);
    }

    #[test]
    fn riverswim5_is_valid_and_right_is_optimal() {
        let mdp = riverswim5();
        mdp.validate().unwrap();
        let q = value_iteration(&mdp, 1e-10).unwrap();
        for s in 0..mdp.n_states {
            assert!(q[s][RIGHT] > q[s][LEFT], "state {s}: {:?}", q[s]);
        }
    }

    #[test]
    fn rejects_bad_distribution() {
        let mut mdp = riverswim5();
        mdp.transitions[2][RIGHT][2] += 1e-6;
        assert!(mdp.validate().is_err());
    }
}
