use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diff::Tensor;
use crate::envs::{EnvConfig, Environment};
use crate::error::{invalid, Error, Result};
use crate::metrics::{default_bins, mean_ci95, CoverageGrid, EpochMetrics, DEFAULT_EPSILON};
use crate::replay::{synthetic_batch, ReplayBuffer};

use super::agent::{Agent, AgentState};
use super::config::AgentConfig;

pub const CHECKPOINT_VERSION: u32 = 1;

/// Loop sizes and instrumentation of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub explore_steps: usize,
    pub train_steps: usize,
    pub replay_capacity: usize,
    /// Interaction steps of the evaluation policy per epoch.
    pub eval_window: usize,
    /// Defaults to 50 per dimension for 2-D inputs and 8 otherwise.
    pub coverage_bins: Option<usize>,
    pub coverage_epsilon: f64,
    /// Uniform probe points for the σ statistic away from data.
    pub synthetic_probes: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            explore_steps: 1000,
            train_steps: 1000,
            replay_capacity: 1_000_000,
            eval_window: 3000,
            coverage_bins: None,
            coverage_epsilon: DEFAULT_EPSILON,
            synthetic_probes: 1024,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.replay_capacity == 0 {
            return Err(invalid("replay_capacity must be positive"));
        }
        if self.coverage_bins == Some(0) {
            return Err(invalid("coverage_bins must be positive"));
        }
        if !(self.coverage_epsilon >= 0.0) {
            return Err(invalid("coverage_epsilon must be non-negative"));
        }
        Ok(())
    }
}

const STREAM_INIT: u64 = 0;
const STREAM_ENV: u64 = 1;
const STREAM_AGENT: u64 = 2;
const STREAM_EVAL: u64 = 3;

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Agent, environment, replay memory and instrumentation of a single seed.
pub struct Trainer {
    agent: Agent,
    env_config: EnvConfig,
    env: Box<dyn Environment>,
    eval_env: Box<dyn Environment>,
    buffer: ReplayBuffer,
    grid: CoverageGrid,
    config: TrainConfig,
    seed: u64,
    env_rng: ChaCha8Rng,
    agent_rng: ChaCha8Rng,
    eval_rng: ChaCha8Rng,
    probes: Tensor,
    episode_step: usize,
    needs_reset: bool,
    epoch: usize,
}

impl std::fmt::Debug for Trainer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Trainer")
            .field("env", &self.env.spec().name)
            .field("algorithm", &self.agent.algorithm())
            .field("seed", &self.seed)
            .field("epoch", &self.epoch)
            .finish()
    }
}

impl Trainer {
    pub fn new(env_config: EnvConfig, agent_config: AgentConfig, config: TrainConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let env = env_config.build()?;
        let eval_env = env_config.build()?;
        let spec = env.spec().clone();
        let mut init = stream(seed, STREAM_INIT);
        let agent = Agent::new(agent_config, &spec, &mut init)?;
        let dim = spec.input_dim();
        let grid = CoverageGrid::new(dim, config.coverage_bins.unwrap_or_else(|| default_bins(dim)))?;
        let probes = if config.synthetic_probes > 0 {
            Tensor::from_rows(&synthetic_batch(&spec, config.synthetic_probes, &mut init))?
        } else {
            Tensor::zeros(&[0, dim])
        };
        Ok(Self {
            agent,
            env_config,
            env,
            eval_env,
            buffer: ReplayBuffer::new(config.replay_capacity),
            grid,
            config,
            seed,
            env_rng: stream(seed, STREAM_ENV),
            agent_rng: stream(seed, STREAM_AGENT),
            eval_rng: stream(seed, STREAM_EVAL),
            probes,
            episode_step: 0,
            needs_reset: true,
            epoch: 0,
        })
    }

    pub fn agent(&self) -> &Agent {
        &self.agent
    }

    pub fn buffer(&self) -> &ReplayBuffer {
        &self.buffer
    }

    pub fn grid(&self) -> &CoverageGrid {
        &self.grid
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// One epoch: snapshot σ, explore, train, evaluate.
    pub fn train_epoch(&mut self) -> Result<EpochMetrics> {
        self.epoch += 1;
        self.agent.refresh_snapshot();
        let spec = self.env.spec().clone();
        let mut visited = Vec::with_capacity(self.config.explore_steps);
        for _ in 0..self.config.explore_steps {
            if self.needs_reset {
                self.env.reset(&mut self.env_rng)?;
                self.episode_step = 0;
                self.needs_reset = false;
            }
            let state = self.env.state().to_vec();
            let squashed = self.agent.explore_action(&state, &mut self.agent_rng)?;
            let action = spec.scale_action(&squashed);
            let t = self.env.step(&action, &mut self.env_rng).map_err(|e| {
                Error::InvalidArgument(format!("{} step at state {state:?}, action {action:?}: {e}", spec.name))
            })?;
            let point = spec.normalize(&t.state, &t.action);
            self.grid.record_visit(&point)?;
            visited.push(point);
            self.episode_step += 1;
            if t.terminal || self.episode_step >= spec.horizon {
                self.needs_reset = true;
            }
            self.buffer.push(t);
        }

        let (mut critic_sum, mut actor_sum) = (0.0, 0.0);
        for _ in 0..self.config.train_steps {
            let s = self.agent.train_iteration(&self.buffer, &mut self.agent_rng)?;
            critic_sum += s.critic_loss;
            actor_sum += s.actor_loss;
        }
        let iters = self.config.train_steps as f64;

        let (returns, completed) = self.evaluate()?;
        let (return_mean, return_ci95) = mean_ci95(&returns);
        let (sigma_visited_mean, sigma_synthetic_mean) = self.sigma_statistics(&visited)?;
        Ok(EpochMetrics {
            epoch: self.epoch,
            return_mean,
            return_ci95,
            episodes_completed: completed,
            coverage: self.grid.coverage(self.config.coverage_epsilon),
            alpha: self.agent.alpha(),
            sigma_visited_mean,
            sigma_synthetic_mean,
            critic_loss: if iters > 0.0 { critic_sum / iters } else { f64::NAN },
            actor_loss: if iters > 0.0 { actor_sum / iters } else { f64::NAN },
        })
    }

    /// Runs the deterministic evaluation policy for `eval_window` steps.
    /// Returns per-episode returns and the number of episodes that reached a
    /// terminal state.
    pub fn evaluate(&mut self) -> Result<(Vec<f64>, usize)> {
        let horizon = self.eval_env.spec().horizon;
        let mut returns = Vec::new();
        let mut completed = 0;
        let mut ret = 0.0;
        let mut steps = 0;
        self.eval_env.reset(&mut self.eval_rng)?;
        for _ in 0..self.config.eval_window {
            let state = self.eval_env.state().to_vec();
            let squashed = self.agent.eval_action(&state)?;
            let action = self.eval_env.spec().scale_action(&squashed);
            let t = self.eval_env.step(&action, &mut self.eval_rng)?;
            ret += t.reward;
            steps += 1;
            if t.terminal || steps >= horizon {
                completed += t.terminal as usize;
                returns.push(ret);
                ret = 0.0;
                steps = 0;
                self.eval_env.reset(&mut self.eval_rng)?;
            }
        }
        if returns.is_empty() && steps > 0 {
            returns.push(ret);
        }
        Ok((returns, completed))
    }

    /// Mean σ over this epoch's visited points and over the uniform probes
    /// lying in cells never visited.
    fn sigma_statistics(&self, visited: &[Vec<f64>]) -> Result<(f64, f64)> {
        if self.agent.distributional_critics().is_none() {
            return Ok((f64::NAN, f64::NAN));
        }
        let mean = |input: &Tensor| -> Result<f64> {
            if input.rows() == 0 {
                return Ok(f64::NAN);
            }
            let s = self.agent.sigma_at(input)?.expect("distributional");
            Ok(s.iter().sum::<f64>() / s.len() as f64)
        };
        let stride = visited.len().div_ceil(256).max(1);
        let sub: Vec<&Vec<f64>> = visited.iter().step_by(stride).collect();
        let visited_mean = if sub.is_empty() { f64::NAN } else { mean(&Tensor::from_rows(&sub)?)? };
        let unvisited: Vec<&[f64]> =
            (0..self.probes.rows()).map(|i| self.probes.row(i)).filter(|p| self.grid.count_at(p) == 0).collect();
        let synthetic_mean = if unvisited.is_empty() { f64::NAN } else { mean(&Tensor::from_rows(&unvisited)?)? };
        Ok((visited_mean, synthetic_mean))
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            format_version: CHECKPOINT_VERSION,
            env_config: self.env_config.clone(),
            train_config: self.config.clone(),
            seed: self.seed,
            epoch: self.epoch,
            agent: self.agent.to_state(),
            buffer: self.buffer.clone(),
            grid: self.grid.clone(),
            env_state: self.env.state().to_vec(),
            episode_step: self.episode_step,
            needs_reset: self.needs_reset,
            rngs: [self.env_rng.clone(), self.agent_rng.clone(), self.eval_rng.clone()],
            probes: self.probes.clone(),
        }
    }

    pub fn restore(ck: &Checkpoint) -> Result<Self> {
        if ck.format_version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "format version {} is not supported (expected {CHECKPOINT_VERSION})",
                ck.format_version
            )));
        }
        ck.train_config.validate()?;
        let mut env = ck.env_config.build()?;
        if !ck.needs_reset {
            env.set_state(&ck.env_state)?;
        }
        let eval_env = ck.env_config.build()?;
        let [env_rng, agent_rng, eval_rng] = ck.rngs.clone();
        Ok(Self {
            agent: Agent::from_state(&ck.agent)?,
            env_config: ck.env_config.clone(),
            env,
            eval_env,
            buffer: ck.buffer.clone(),
            grid: ck.grid.clone(),
            config: ck.train_config.clone(),
            seed: ck.seed,
            env_rng,
            agent_rng,
            eval_rng,
            probes: ck.probes.clone(),
            episode_step: ck.episode_step,
            needs_reset: ck.needs_reset,
            epoch: ck.epoch,
        })
    }
}

/// Everything needed to resume a run bit-exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub env_config: EnvConfig,
    pub train_config: TrainConfig,
    pub seed: u64,
    pub epoch: usize,
    pub agent: AgentState,
    pub buffer: ReplayBuffer,
    pub grid: CoverageGrid,
    pub env_state: Vec<f64>,
    pub episode_step: usize,
    pub needs_reset: bool,
    pub rngs: [ChaCha8Rng; 3],
    pub probes: Tensor,
}

impl Checkpoint {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string(self).map_err(|e| Error::Checkpoint(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Checkpoint(e.to_string()))
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
