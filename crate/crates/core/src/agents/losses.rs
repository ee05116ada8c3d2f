//! Critic targets and losses for the distributional and scalar agents.

use crate::diff::{Grad, Mlp, Tape, Tensor, Var};
use crate::envs::{EnvSpec, Transition};
use crate::error::{invalid, Result};
use crate::gaussq::{std_normal_quantile, GaussianPosterior};

use super::critic::{DistributionalCritic, SigmaSnapshot};
use super::policy::SquashedGaussianPolicy;

/// A replay sample mapped into network coordinates.
#[derive(Debug, Clone)]
pub struct Batch {
    /// `[n, nS]`, normalized to `[-1, 1]`.
    pub states: Tensor,
    /// `[n, nA]`, normalized to `[-1, 1]`.
    pub actions: Tensor,
    pub rewards: Vec<f64>,
    pub next_states: Tensor,
    pub terminals: Vec<bool>,
}

impl Batch {
    pub fn from_transitions(spec: &EnvSpec, transitions: &[&Transition]) -> Result<Self> {
        if transitions.is_empty() {
            return Err(invalid("empty batch"));
        }
        let mut states = Vec::new();
        let mut actions = Vec::new();
        let mut next_states = Vec::new();
        for t in transitions {
            let point = spec.normalize(&t.state, &t.action);
            let (s, a) = point.split_at(spec.state_dim());
            states.push(s.to_vec());
            actions.push(a.to_vec());
            next_states.push(spec.normalize_state(&t.next_state));
        }
        Ok(Self {
            states: Tensor::from_rows(&states)?,
            actions: Tensor::from_rows(&actions)?,
            rewards: transitions.iter().map(|t| t.reward).collect(),
            next_states: Tensor::from_rows(&next_states)?,
            terminals: transitions.iter().map(|t| t.terminal).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    /// `[states | actions]`, the critic input.
    pub fn critic_input(&self) -> Tensor {
        Tensor::concat_cols(&self.states, &self.actions).expect("batch rows agree")
    }
}

/// Per-sample Gaussian regression targets.
#[derive(Debug, Clone, PartialEq)]
pub struct CriticTargets {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// Pushes a next-state posterior through `r + gamma * X`; terminal
/// transitions collapse to the point mass at `r`.
pub fn bootstrap_target(reward: f64, terminal: bool, gamma: f64, next: GaussianPosterior) -> GaussianPosterior {
    if terminal {
        GaussianPosterior::dirac(reward)
    } else {
        next.affine(reward, gamma)
    }
}

/// Targets from the target critics at `a' ~ policy(s')`.
///
/// Per sample the critic with the smaller mean supplies both moments and
/// the entropy bonus is subtracted from that mean.
pub fn wac_critic_targets(
    batch: &Batch,
    target_critics: &[DistributionalCritic],
    policy: &SquashedGaussianPolicy,
    alpha: f64,
    gamma: f64,
    noise: &Tensor,
) -> Result<CriticTargets> {
    let (next_actions, logp) = policy.sample_with_noise(&batch.next_states, noise)?;
    let input = Tensor::concat_cols(&batch.next_states, &next_actions)?;
    let preds = target_critics.iter().map(|c| c.predict(&input)).collect::<Result<Vec<_>>>()?;
    let n = batch.len();
    let mut out = CriticTargets { mean: Vec::with_capacity(n), std: Vec::with_capacity(n) };
    for j in 0..n {
        let (mu, sigma) =
            preds
                .iter()
                .map(|(m, s)| (m[j], s[j]))
                .fold((f64::INFINITY, 0.0), |best, cur| if cur.0 < best.0 { cur } else { best });
        let next = GaussianPosterior { mean: mu - alpha * logp[j], std: sigma };
        let t = bootstrap_target(batch.rewards[j], batch.terminals[j], gamma, next);
        out.mean.push(t.mean);
        out.std.push(t.std);
    }
    Ok(out)
}

/// Scalar soft Bellman targets for twin Q-networks.
pub fn sac_critic_targets(
    batch: &Batch,
    target_q: &[Mlp],
    policy: &SquashedGaussianPolicy,
    alpha: f64,
    gamma: f64,
    noise: &Tensor,
) -> Result<Vec<f64>> {
    let (next_actions, logp) = policy.sample_with_noise(&batch.next_states, noise)?;
    let input = Tensor::concat_cols(&batch.next_states, &next_actions)?;
    let preds = target_q.iter().map(|q| q.predict(&input)).collect::<Result<Vec<_>>>()?;
    Ok((0..batch.len())
        .map(|j| {
            let q = preds.iter().map(|p| p.data()[j]).fold(f64::INFINITY, f64::min);
            let r = batch.rewards[j];
            if batch.terminals[j] {
                r
            } else {
                r + gamma * (q - alpha * logp[j])
            }
        })
        .collect())
}

/// Batch mean of `(mu - m)² + (sigma - s)²`, the squared W2 distance to the
/// target Gaussians.
pub fn w2_critic_loss(tape: &mut Tape, mu: Var, sigma: Var, targets: &CriticTargets) -> Var {
    let tm = tape.constant(Tensor::column(targets.mean.clone()));
    let ts = tape.constant(Tensor::column(targets.std.clone()));
    let dm = tape.sub(mu, tm);
    let ds = tape.sub(sigma, ts);
    let dm2 = tape.square(dm);
    let ds2 = tape.square(ds);
    let total = tape.add(dm2, ds2);
    tape.mean(total)
}

/// Batch mean of `(sigma - sigma_old)²`.
pub fn sigma_anchor_loss(tape: &mut Tape, sigma: Var, sigma_old: &[f64]) -> Var {
    let old = tape.constant(Tensor::column(sigma_old.to_vec()));
    let d = tape.sub(sigma, old);
    let d2 = tape.square(d);
    tape.mean(d2)
}

/// Unregularized critic loss summed over the critics.
pub fn wac_critic_loss(
    tape: &mut Tape,
    critics: &[DistributionalCritic],
    input: &Tensor,
    targets: &CriticTargets,
) -> Result<Var> {
    let x = tape.constant(input.clone());
    let mut total = None;
    for c in critics {
        let (mu, sigma) = c.forward(tape, x, Grad::Track)?;
        let l = w2_critic_loss(tape, mu, sigma, targets);
        total = Some(match total {
            None => l,
            Some(t) => tape.add(t, l),
        });
    }
    total.ok_or_else(|| invalid("no critics"))
}

/// Critic loss plus `lambda` times the σ anchoring term on `synthetic`
/// inputs, for every critic. With `lambda = 0` or no synthetic rows this is
/// exactly [`wac_critic_loss`].
pub fn regularized_critic_loss(
    tape: &mut Tape,
    critics: &[DistributionalCritic],
    input: &Tensor,
    targets: &CriticTargets,
    synthetic: &Tensor,
    snapshot: &SigmaSnapshot,
    lambda: f64,
) -> Result<Var> {
    let base = wac_critic_loss(tape, critics, input, targets)?;
    if lambda == 0.0 || synthetic.numel() == 0 {
        return Ok(base);
    }
    if snapshot.len() != critics.len() {
        return Err(invalid("snapshot and critic counts differ"));
    }
    let x = tape.constant(synthetic.clone());
    let mut reg = None;
    for (i, c) in critics.iter().enumerate() {
        let sigma = c.sigma_forward(tape, x, Grad::Track)?;
        let old = snapshot.sigma(i, synthetic)?;
        let l = sigma_anchor_loss(tape, sigma, &old);
        reg = Some(match reg {
            None => l,
            Some(r) => tape.add(r, l),
        });
    }
    let reg = tape.scale(reg.expect("at least one critic"), lambda);
    Ok(tape.add(base, reg))
}

/// Squared error of twin Q-networks against shared scalar targets.
pub fn sac_critic_loss(tape: &mut Tape, qs: &[Mlp], input: &Tensor, targets: &[f64]) -> Result<Var> {
    let x = tape.constant(input.clone());
    let y = tape.constant(Tensor::column(targets.to_vec()));
    let mut total = None;
    for q in qs {
        let v = q.forward(tape, x, Grad::Track)?;
        let d = tape.sub(v, y);
        let d2 = tape.square(d);
        let l = tape.mean(d2);
        total = Some(match total {
            None => l,
            Some(t) => tape.add(t, l),
        });
    }
    total.ok_or_else(|| invalid("no critics"))
}

/// An actor objective and the log-densities of the actions it drew.
#[derive(Debug, Clone, Copy)]
pub struct ActorLoss {
    pub loss: Var,
    pub logp: Var,
}

fn actor_objective(
    tape: &mut Tape,
    policy: &SquashedGaussianPolicy,
    states: &Tensor,
    noise: &Tensor,
    alpha: f64,
    values: impl Fn(&mut Tape, Var) -> Result<Vec<Var>>,
) -> Result<ActorLoss> {
    let s = tape.constant(states.clone());
    let sample = policy.rsample(tape, s, noise, Grad::Track)?;
    let input = tape.concat_cols(s, sample.action);
    let vals = values(tape, input)?;
    let (first, rest) = vals.split_first().ok_or_else(|| invalid("no critics"))?;
    let mut min = *first;
    for v in rest {
        min = tape.minimum(min, *v);
    }
    let ent = tape.scale(sample.logp, alpha);
    let diff = tape.sub(ent, min);
    Ok(ActorLoss { loss: tape.mean(diff), logp: sample.logp })
}

/// `mean[alpha * log pi - min_i (mu_i + z_delta * sigma_i)]` with frozen critics.
pub fn wac_actor_loss(
    tape: &mut Tape,
    critics: &[DistributionalCritic],
    policy: &SquashedGaussianPolicy,
    states: &Tensor,
    noise: &Tensor,
    alpha: f64,
    delta: f64,
) -> Result<ActorLoss> {
    let z = std_normal_quantile(delta)?;
    actor_objective(tape, policy, states, noise, alpha, |tape, x| {
        critics
            .iter()
            .map(|c| {
                let (mu, sigma) = c.forward(tape, x, Grad::Frozen)?;
                let spread = tape.scale(sigma, z);
                Ok(tape.add(mu, spread))
            })
            .collect()
    })
}

/// `mean[alpha * log pi - min_i mu_i]`: the mean-greedy objective.
pub fn target_actor_loss(
    tape: &mut Tape,
    critics: &[DistributionalCritic],
    policy: &SquashedGaussianPolicy,
    states: &Tensor,
    noise: &Tensor,
    alpha: f64,
) -> Result<ActorLoss> {
    actor_objective(tape, policy, states, noise, alpha, |tape, x| {
        critics.iter().map(|c| Ok(c.forward(tape, x, Grad::Frozen)?.0)).collect()
    })
}

/// `mean[alpha * log pi - min_i Q_i]`.
pub fn sac_actor_loss(
    tape: &mut Tape,
    qs: &[Mlp],
    policy: &SquashedGaussianPolicy,
    states: &Tensor,
    noise: &Tensor,
    alpha: f64,
) -> Result<ActorLoss> {
    actor_objective(tape, policy, states, noise, alpha, |tape, x| {
        qs.iter().map(|q| q.forward(tape, x, Grad::Frozen)).collect()
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bootstrap_examples() {
        let t = bootstrap_target(0.0, false, 0.99, GaussianPosterior { mean: 10.0, std: 2.0 });
        assert!((t.mean - 9.9).abs() < 1e-12 && (t.std - 1.98).abs() < 1e-12);
        let t = bootstrap_target(1.0, true, 0.99, GaussianPosterior { mean: 10.0, std: 2.0 });
        assert_eq!((t.mean, t.std), (1.0, 0.0));
    }

    #[test]
    fn w2_loss_value() {
        let mut tape = Tape::new();
        let mu = tape.input(Tensor::column(vec![1.0, 2.0]));
        let sigma = tape.input(Tensor::column(vec![1.0, 1.0]));
        let targets = CriticTargets { mean: vec![0.0, 2.0], std: vec![3.0, 1.0] };
        let l = w2_critic_loss(&mut tape, mu, sigma, &targets);
        // ((1 + 4) + (0 + 0)) / 2
        assert!((tape.value(l).item() - 2.5).abs() < 1e-15);
    }

    #[test]
    fn anchor_single_point() {
        let mut tape = Tape::new();
        let sigma = tape.input(Tensor::column(vec![2.0]));
        let l = sigma_anchor_loss(&mut tape, sigma, &[1.0]);
        let l = tape.scale(l, 0.6);
        assert!((tape.value(l).item() - 0.6).abs() < 1e-15);
    }
}
