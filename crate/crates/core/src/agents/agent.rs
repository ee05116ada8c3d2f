use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::diff::{
    soft_update, Activation, AdamConfig, AdamState, Gradients, Mlp, MlpSnapshot, Param, Parameterized, Tape, Tensor,
};
use crate::envs::EnvSpec;
use crate::error::{invalid, Error, Result};
use crate::gaussq::{prior_std, ValueBounds};
use crate::replay::{synthetic_batch, synthetic_count, ReplayBuffer};

use super::config::{AgentConfig, Algorithm, AlphaMode};
use super::critic::{CriticSnapshot, DistributionalCritic, SigmaSnapshot};
use super::losses::{
    regularized_critic_loss, sac_actor_loss, sac_critic_loss, sac_critic_targets, target_actor_loss, wac_actor_loss,
    wac_critic_targets, ActorLoss, Batch,
};
use super::oac::{oac_exploration_action, oac_shift};
use super::policy::SquashedGaussianPolicy;

#[derive(Debug)]
enum Critics {
    Wac { online: Vec<DistributionalCritic>, target: Vec<DistributionalCritic>, snapshot: Option<SigmaSnapshot> },
    Scalar { online: Vec<Mlp>, target: Vec<Mlp> },
}

/// Losses of one gradient iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationStats {
    pub critic_loss: f64,
    pub actor_loss: f64,
    pub alpha: f64,
}

/// An actor-critic learner: WAC (OE or ME), SAC or OAC.
#[derive(Debug)]
pub struct Agent {
    config: AgentConfig,
    spec: EnvSpec,
    gamma: f64,
    sigma0: f64,
    target_entropy: f64,
    policy: SquashedGaussianPolicy,
    policy_opt: AdamState,
    /// Mean-greedy policy of the ME variant.
    target_policy: Option<(SquashedGaussianPolicy, AdamState)>,
    critics: Critics,
    critic_opt: AdamState,
    log_alpha: Param,
    alpha_opt: AdamState,
}

fn critic_params(critics: &Critics) -> Vec<&Param> {
    match critics {
        Critics::Wac { online, .. } => online.iter().flat_map(|c| c.params()).collect(),
        Critics::Scalar { online, .. } => online.iter().flat_map(|c| c.params()).collect(),
    }
}

impl Agent {
    pub fn new<R: Rng + ?Sized>(config: AgentConfig, spec: &EnvSpec, rng: &mut R) -> Result<Self> {
        config.validate()?;
        spec.validate()?;
        let gamma = config.gamma.unwrap_or(spec.gamma);
        let sigma0 = prior_std(ValueBounds::from_rewards(spec.r_min, spec.r_max, gamma)?);
        let (ns, na) = (spec.state_dim(), spec.action_dim());
        let hidden = &config.hidden;
        let adam = AdamConfig { lr: config.learning_rate, ..AdamConfig::default() };

        let policy = SquashedGaussianPolicy::new(ns, na, hidden, rng)?;
        let policy_opt = AdamState::new(adam, &policy.params());
        let target_policy = if config.algorithm == Algorithm::MeWac {
            let p = SquashedGaussianPolicy::new(ns, na, hidden, rng)?;
            let opt = AdamState::new(adam, &p.params());
            Some((p, opt))
        } else {
            None
        };

        let critics = if config.algorithm.is_wac() {
            let online = (0..2)
                .map(|_| DistributionalCritic::new(ns + na, hidden, sigma0, config.wac.shared_trunk, rng))
                .collect::<Result<Vec<_>>>()?;
            let target = online.iter().map(DistributionalCritic::duplicate).collect();
            Critics::Wac { online, target, snapshot: None }
        } else {
            let online = (0..2)
                .map(|_| Mlp::with_hidden(ns + na, hidden, 1, Activation::Identity, rng))
                .collect::<Result<Vec<_>>>()?;
            let target = online.iter().map(Mlp::duplicate).collect();
            Critics::Scalar { online, target }
        };
        let critic_opt = AdamState::new(adam, &critic_params(&critics));

        let (log_alpha, target_entropy) = match config.alpha {
            AlphaMode::Fixed { .. } => (0.0, f64::NAN),
            AlphaMode::Auto { target_entropy } => (0.0, target_entropy.unwrap_or(-(na as f64))),
        };
        let log_alpha = Param::new("log_alpha", Tensor::scalar(log_alpha));
        let alpha_opt = AdamState::new(adam, &[&log_alpha]);

        Ok(Self {
            config,
            spec: spec.clone(),
            gamma,
            sigma0,
            target_entropy,
            policy,
            policy_opt,
            target_policy,
            critics,
            critic_opt,
            log_alpha,
            alpha_opt,
        })
    }

    pub fn config(&self) -> &AgentConfig {
        &self.config
    }

    pub fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    pub fn algorithm(&self) -> Algorithm {
        self.config.algorithm
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Prior standard deviation of the Q-posteriors.
    pub fn sigma0(&self) -> f64 {
        self.sigma0
    }

    pub fn alpha(&self) -> f64 {
        match self.config.alpha {
            AlphaMode::Fixed { value } => value,
            AlphaMode::Auto { .. } => self.log_alpha.value().item().exp(),
        }
    }

    pub fn policy(&self) -> &SquashedGaussianPolicy {
        &self.policy
    }

    pub fn target_policy(&self) -> Option<&SquashedGaussianPolicy> {
        self.target_policy.as_ref().map(|(p, _)| p)
    }

    /// Policy used for evaluation episodes.
    pub fn eval_policy(&self) -> &SquashedGaussianPolicy {
        self.target_policy().unwrap_or(&self.policy)
    }

    /// Policy whose actions bootstrap the critic targets.
    fn bootstrap_policy(&self) -> &SquashedGaussianPolicy {
        self.eval_policy()
    }

    pub fn distributional_critics(&self) -> Option<&[DistributionalCritic]> {
        match &self.critics {
            Critics::Wac { online, .. } => Some(online),
            Critics::Scalar { .. } => None,
        }
    }

    pub fn target_distributional_critics(&self) -> Option<&[DistributionalCritic]> {
        match &self.critics {
            Critics::Wac { target, .. } => Some(target),
            Critics::Scalar { .. } => None,
        }
    }

    pub fn scalar_critics(&self) -> Option<&[Mlp]> {
        match &self.critics {
            Critics::Scalar { online, .. } => Some(online),
            Critics::Wac { .. } => None,
        }
    }

    pub fn sigma_snapshot(&self) -> Option<&SigmaSnapshot> {
        match &self.critics {
            Critics::Wac { snapshot, .. } => snapshot.as_ref(),
            Critics::Scalar { .. } => None,
        }
    }

    /// `sigma_old <- sigma`; a no-op for scalar critics.
    pub fn refresh_snapshot(&mut self) {
        if let Critics::Wac { online, snapshot, .. } = &mut self.critics {
            *snapshot = Some(SigmaSnapshot::capture(online));
        }
    }

    /// Min over critics of σ at normalized `(s, a)` rows.
    pub fn sigma_at(&self, input: &Tensor) -> Result<Option<Vec<f64>>> {
        let Some(critics) = self.distributional_critics() else {
            return Ok(None);
        };
        let mut out: Option<Vec<f64>> = None;
        for c in critics {
            let s = c.predict_sigma(input)?;
            out = Some(match out {
                None => s,
                Some(o) => o.iter().zip(&s).map(|(a, b)| a.min(*b)).collect(),
            });
        }
        Ok(out)
    }

    /// Squashed exploration action in `(-1, 1)^nA` for a raw state.
    pub fn explore_action<R: Rng + ?Sized>(&self, state: &[f64], rng: &mut R) -> Result<Vec<f64>> {
        let s = self.spec.normalize_state(state);
        let noise = self.policy.noise(1, rng);
        if let (Algorithm::Oac, Critics::Scalar { online, .. }) = (self.config.algorithm, &self.critics) {
            let qs: &[Mlp; 2] = online.as_slice().try_into().map_err(|_| invalid("oac needs two critics"))?;
            let shift = oac_shift(&self.policy, qs, &s, &self.config.oac)?;
            return Ok(oac_exploration_action(&shift, noise.data()));
        }
        let st = Tensor::matrix(1, s.len(), s)?;
        Ok(self.policy.sample_with_noise(&st, &noise)?.0.into_data())
    }

    /// Deterministic squashed action of the evaluation policy.
    pub fn eval_action(&self, state: &[f64]) -> Result<Vec<f64>> {
        let s = self.spec.normalize_state(state);
        let st = Tensor::matrix(1, s.len(), s)?;
        Ok(self.eval_policy().mode(&st)?.into_data())
    }

    /// Mean-greedy objective for the target policy; only defined for ME.
    pub fn target_actor_loss(&self, tape: &mut Tape, states: &Tensor, noise: &Tensor) -> Result<ActorLoss> {
        let (Some((tp, _)), Critics::Wac { online, .. }) = (&self.target_policy, &self.critics) else {
            return Err(invalid(format!(
                "target actor objective is only defined for me-wac, not {}",
                self.config.algorithm
            )));
        };
        target_actor_loss(tape, online, tp, states, noise, self.alpha())
    }

    /// One critic step, one actor step, the temperature step, the ME target
    /// actor step and the soft target update, on a fresh replay batch.
    pub fn train_iteration<R: Rng + ?Sized>(&mut self, buffer: &ReplayBuffer, rng: &mut R) -> Result<IterationStats> {
        let n = self.config.batch_size;
        let sample = buffer.sample_batch(n, rng)?;
        let batch = Batch::from_transitions(&self.spec, &sample)?;
        let alpha = self.alpha();
        let input = batch.critic_input();

        let target_noise = self.policy.noise(n, rng);
        let mut tape = Tape::new();
        let critic_loss = match &self.critics {
            Critics::Wac { online, target, snapshot } => {
                let targets =
                    wac_critic_targets(&batch, target, self.bootstrap_policy(), alpha, self.gamma, &target_noise)?;
                let m = synthetic_count(self.config.wac.rho, n);
                let lambda = self.config.wac.lambda;
                let synthetic = if lambda > 0.0 && m > 0 {
                    Tensor::from_rows(&synthetic_batch(&self.spec, m, rng))?
                } else {
                    Tensor::zeros(&[0, self.spec.input_dim()])
                };
                let fresh;
                let snap = match snapshot {
                    Some(s) => s,
                    None => {
                        fresh = SigmaSnapshot::capture(online);
                        &fresh
                    }
                };
                regularized_critic_loss(&mut tape, online, &input, &targets, &synthetic, snap, lambda)?
            }
            Critics::Scalar { online, target } => {
                let targets = sac_critic_targets(&batch, target, &self.policy, alpha, self.gamma, &target_noise)?;
                sac_critic_loss(&mut tape, online, &input, &targets)?
            }
        };
        let critic_value = tape.value(critic_loss).item();
        if !critic_value.is_finite() {
            return Err(Error::NonFinite(format!("critic loss {critic_value}")));
        }
        let grads = tape.backward(critic_loss)?;
        let params: Vec<&mut Param> = match &mut self.critics {
            Critics::Wac { online, .. } => online.iter_mut().flat_map(|c| c.params_mut()).collect(),
            Critics::Scalar { online, .. } => online.iter_mut().flat_map(|c| c.params_mut()).collect(),
        };
        self.critic_opt.step(params, &grads)?;

        let noise = self.policy.noise(n, rng);
        let mut tape = Tape::new();
        let actor = match &self.critics {
            Critics::Wac { online, .. } => {
                wac_actor_loss(&mut tape, online, &self.policy, &batch.states, &noise, alpha, self.config.wac.delta)?
            }
            Critics::Scalar { online, .. } => {
                sac_actor_loss(&mut tape, online, &self.policy, &batch.states, &noise, alpha)?
            }
        };
        let actor_value = tape.value(actor.loss).item();
        if !actor_value.is_finite() {
            return Err(Error::NonFinite(format!("actor loss {actor_value}")));
        }
        let grads = tape.backward(actor.loss)?;
        self.policy_opt.step(self.policy.params_mut(), &grads)?;
        let mean_logp = tape.value(actor.logp).mean();
        self.update_alpha(mean_logp)?;

        if self.target_policy.is_some() {
            let noise = self.policy.noise(n, rng);
            let mut tape = Tape::new();
            let tl = self.target_actor_loss(&mut tape, &batch.states, &noise)?;
            let grads = tape.backward(tl.loss)?;
            let (tp, opt) = self.target_policy.as_mut().expect("checked");
            opt.step(tp.params_mut(), &grads)?;
        }

        let tau = self.config.tau;
        match &mut self.critics {
            Critics::Wac { online, target, .. } => {
                for (t, o) in target.iter_mut().zip(online.iter()) {
                    t.soft_update_from(o, tau)?;
                }
            }
            Critics::Scalar { online, target } => {
                for (t, o) in target.iter_mut().zip(online.iter()) {
                    soft_update(t, o, tau)?;
                }
            }
        }
        Ok(IterationStats { critic_loss: critic_value, actor_loss: actor_value, alpha })
    }

    /// Gradient step on `-log_alpha * (mean log pi + target_entropy)`.
    fn update_alpha(&mut self, mean_logp: f64) -> Result<()> {
        if let AlphaMode::Auto { .. } = self.config.alpha {
            let g = -(mean_logp + self.target_entropy);
            let grads = Gradients::from_params([(self.log_alpha.id(), Tensor::scalar(g))]);
            self.alpha_opt.step(vec![&mut self.log_alpha], &grads)?;
        }
        Ok(())
    }

    pub fn to_state(&self) -> AgentState {
        let critics = match &self.critics {
            Critics::Wac { online, target, snapshot } => CriticsState::Wac {
                online: online.iter().map(DistributionalCritic::to_snapshot).collect(),
                target: target.iter().map(DistributionalCritic::to_snapshot).collect(),
                snapshot: snapshot.as_ref().map(SigmaSnapshot::to_snapshots),
            },
            Critics::Scalar { online, target } => CriticsState::Scalar {
                online: online.iter().map(Mlp::to_snapshot).collect(),
                target: target.iter().map(Mlp::to_snapshot).collect(),
            },
        };
        AgentState {
            config: self.config.clone(),
            spec: self.spec.clone(),
            policy: self.policy.to_snapshot(),
            policy_opt: self.policy_opt.clone(),
            target_policy: self.target_policy.as_ref().map(|(p, o)| (p.to_snapshot(), o.clone())),
            critics,
            critic_opt: self.critic_opt.clone(),
            log_alpha: self.log_alpha.value().item(),
            alpha_opt: self.alpha_opt.clone(),
        }
    }

    pub fn from_state(state: &AgentState) -> Result<Self> {
        state.config.validate()?;
        let gamma = state.config.gamma.unwrap_or(state.spec.gamma);
        let sigma0 = prior_std(ValueBounds::from_rewards(state.spec.r_min, state.spec.r_max, gamma)?);
        let target_entropy = match state.config.alpha {
            AlphaMode::Fixed { .. } => f64::NAN,
            AlphaMode::Auto { target_entropy } => target_entropy.unwrap_or(-(state.spec.action_dim() as f64)),
        };
        let critics = match &state.critics {
            CriticsState::Wac { online, target, snapshot } => Critics::Wac {
                online: online.iter().map(DistributionalCritic::from_snapshot).collect::<Result<_>>()?,
                target: target.iter().map(DistributionalCritic::from_snapshot).collect::<Result<_>>()?,
                snapshot: snapshot.as_deref().map(SigmaSnapshot::from_snapshots).transpose()?,
            },
            CriticsState::Scalar { online, target } => Critics::Scalar {
                online: online.iter().map(Mlp::from_snapshot).collect::<Result<_>>()?,
                target: target.iter().map(Mlp::from_snapshot).collect::<Result<_>>()?,
            },
        };
        let target_policy = match &state.target_policy {
            Some((p, o)) => Some((SquashedGaussianPolicy::from_snapshot(p)?, o.clone())),
            None => None,
        };
        Ok(Self {
            config: state.config.clone(),
            spec: state.spec.clone(),
            gamma,
            sigma0,
            target_entropy,
            policy: SquashedGaussianPolicy::from_snapshot(&state.policy)?,
            policy_opt: state.policy_opt.clone(),
            target_policy,
            critics,
            critic_opt: state.critic_opt.clone(),
            log_alpha: Param::new("log_alpha", Tensor::scalar(state.log_alpha)),
            alpha_opt: state.alpha_opt.clone(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum CriticsState {
    Wac { online: Vec<CriticSnapshot>, target: Vec<CriticSnapshot>, snapshot: Option<Vec<(MlpSnapshot, bool)>> },
    Scalar { online: Vec<MlpSnapshot>, target: Vec<MlpSnapshot> },
}

/// Every parameter and optimizer moment of an [`Agent`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentState {
    pub config: AgentConfig,
    pub spec: EnvSpec,
    pub policy: MlpSnapshot,
    pub policy_opt: AdamState,
    pub target_policy: Option<(MlpSnapshot, AdamState)>,
    pub critics: CriticsState,
    pub critic_opt: AdamState,
    pub log_alpha: f64,
    pub alpha_opt: AdamState,
}
