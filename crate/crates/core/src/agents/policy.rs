use rand::Rng;
use rand_distr::StandardNormal;

use crate::diff::{Activation, Grad, Mlp, MlpSnapshot, Param, Parameterized, Tape, Tensor, Var};
use crate::error::Result;

pub const LOG_STD_MIN: f64 = -20.0;
pub const LOG_STD_MAX: f64 = 2.0;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_7;

/// Tanh-squashed diagonal Gaussian policy over normalized states.
///
/// The network emits `[mean | log_std]` per action dimension; actions are
/// `tanh(mean + exp(log_std) * eps)` and therefore lie in `(-1, 1)^nA`.
#[derive(Debug)]
pub struct SquashedGaussianPolicy {
    net: Mlp,
    action_dim: usize,
}

/// Reparameterized draw recorded on a tape.
#[derive(Debug, Clone, Copy)]
pub struct PolicySample {
    pub action: Var,
    /// `[n, 1]` log-density of `action`, squashing correction included.
    pub logp: Var,
}

/// Pre-squash Gaussian parameters for a batch of states.
#[derive(Debug, Clone)]
pub struct PolicyOutput {
    pub mean: Tensor,
    pub log_std: Tensor,
}

/// `log(1 - tanh(x)^2)` in a form that stays finite for large `|x|`.
fn log_squash_jacobian(x: f64) -> f64 {
    2.0 * (std::f64::consts::LN_2 - x - crate::diff::softplus(-2.0 * x))
}

impl SquashedGaussianPolicy {
    pub fn new<R: Rng + ?Sized>(state_dim: usize, action_dim: usize, hidden: &[usize], rng: &mut R) -> Result<Self> {
        let net = Mlp::with_hidden(state_dim, hidden, 2 * action_dim, Activation::Identity, rng)?;
        Ok(Self { net, action_dim })
    }

    pub fn from_snapshot(snap: &MlpSnapshot) -> Result<Self> {
        let net = Mlp::from_snapshot(snap)?;
        let action_dim = net.output_dim() / 2;
        Ok(Self { net, action_dim })
    }

    pub fn net(&self) -> &Mlp {
        &self.net
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    pub fn duplicate(&self) -> Self {
        Self { net: self.net.duplicate(), action_dim: self.action_dim }
    }

    pub fn distribution(&self, states: &Tensor) -> Result<PolicyOutput> {
        let out = self.net.predict(states)?;
        let a = self.action_dim;
        Ok(PolicyOutput {
            mean: out.slice_cols(0, a),
            log_std: out.slice_cols(a, 2 * a).map(|v| v.clamp(LOG_STD_MIN, LOG_STD_MAX)),
        })
    }

    /// Standard-normal noise shaped for `rows` draws.
    pub fn noise<R: Rng + ?Sized>(&self, rows: usize, rng: &mut R) -> Tensor {
        let data = (0..rows * self.action_dim).map(|_| rng.sample(StandardNormal)).collect();
        Tensor::matrix(rows, self.action_dim, data).expect("noise shape")
    }

    /// Squashed actions and log-densities for fixed noise, without a tape.
    pub fn sample_with_noise(&self, states: &Tensor, noise: &Tensor) -> Result<(Tensor, Vec<f64>)> {
        let PolicyOutput { mean, log_std } = self.distribution(states)?;
        Ok(squash(&mean, &log_std, noise))
    }

    /// Deterministic action `tanh(mean)`.
    pub fn mode(&self, states: &Tensor) -> Result<Tensor> {
        Ok(self.distribution(states)?.mean.map(f64::tanh))
    }

    /// Records a reparameterized draw so gradients reach the policy weights.
    pub fn rsample(&self, tape: &mut Tape, states: Var, noise: &Tensor, grad: Grad) -> Result<PolicySample> {
        let a = self.action_dim;
        let out = self.net.forward(tape, states, grad)?;
        let mean = tape.slice_cols(out, 0, a);
        let log_std = tape.slice_cols(out, a, 2 * a);
        let log_std = tape.clamp(log_std, LOG_STD_MIN, LOG_STD_MAX);
        let std = tape.exp(log_std);
        let eps = tape.constant(noise.clone());
        let spread = tape.mul(std, eps);
        let pre = tape.add(mean, spread);
        let action = tape.tanh(pre);

        // log N(pre; mean, std) = sum(-eps²/2 - log_std - ln(2 pi)/2)
        let gauss_const: Vec<f64> =
            noise.data().chunks(a).map(|row| row.iter().map(|e| -0.5 * e * e - HALF_LN_2PI).sum()).collect();
        let gauss_const = tape.constant(Tensor::column(gauss_const));
        let ls_sum = tape.row_sum(log_std);
        let gauss = tape.sub(gauss_const, ls_sum);

        // log(1 - tanh(pre)²) = 2 (ln 2 - pre - softplus(-2 pre))
        let neg2 = tape.scale(pre, -2.0);
        let sp = tape.softplus(neg2);
        let inner = tape.add(pre, sp);
        let inner = tape.scale(inner, -2.0);
        let jac = tape.shift(inner, 2.0 * std::f64::consts::LN_2);
        let jac_sum = tape.row_sum(jac);
        let logp = tape.sub(gauss, jac_sum);
        Ok(PolicySample { action, logp })
    }

    pub fn to_snapshot(&self) -> MlpSnapshot {
        self.net.to_snapshot()
    }
}

/// Squashes `mean + exp(log_std) * noise` and returns per-row log-densities.
pub fn squash(mean: &Tensor, log_std: &Tensor, noise: &Tensor) -> (Tensor, Vec<f64>) {
    let a = mean.cols();
    let n = mean.rows();
    let mut actions = Vec::with_capacity(n * a);
    let mut logp = Vec::with_capacity(n);
    for i in 0..n {
        let mut lp = 0.0;
        for j in 0..a {
            let (m, ls, e) = (mean.get(i, j), log_std.get(i, j), noise.get(i, j));
            let pre = m + ls.exp() * e;
            actions.push(pre.tanh());
            lp += -0.5 * e * e - HALF_LN_2PI - ls - log_squash_jacobian(pre);
        }
        logp.push(lp);
    }
    (Tensor::matrix(n, a, actions).expect("action shape"), logp)
}

impl Parameterized for SquashedGaussianPolicy {
    fn params(&self) -> Vec<&Param> {
        self.net.params()
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        self.net.params_mut()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn tape_and_direct_sampling_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let pol = SquashedGaussianPolicy::new(3, 2, &[8, 8], &mut rng).unwrap();
        let states = Tensor::matrix(4, 3, (0..12).map(|i| (i as f64 * 0.37).sin()).collect()).unwrap();
        let noise = pol.noise(4, &mut rng);
        let (a_direct, lp_direct) = pol.sample_with_noise(&states, &noise).unwrap();
        let mut tape = Tape::new();
        let s = tape.constant(states);
        let sample = pol.rsample(&mut tape, s, &noise, Grad::Track).unwrap();
        for (x, y) in tape.value(sample.action).data().iter().zip(a_direct.data()) {
            assert!((x - y).abs() < 1e-12);
        }
        for (x, y) in tape.value(sample.logp).data().iter().zip(&lp_direct) {
            assert!((x - y).abs() < 1e-10);
        }
        assert!(a_direct.data().iter().all(|v| v.abs() < 1.0));
    }

    #[test]
    fn log_density_matches_change_of_variables() {
        // one dimension: p(a) = N(atanh a; m, s) / (1 - a²)
        let mean = Tensor::matrix(1, 1, vec![0.3]).unwrap();
        let log_std = Tensor::matrix(1, 1, vec![-0.5]).unwrap();
        let noise = Tensor::matrix(1, 1, vec![0.7]).unwrap();
        let (a, lp) = squash(&mean, &log_std, &noise);
        let a = a.item();
        let s = (-0.5f64).exp();
        let pre = a.atanh();
        let gauss = -0.5 * ((pre - 0.3) / s).powi(2) - s.ln() - HALF_LN_2PI;
        let expected = gauss - (1.0 - a * a).ln();
        assert!((lp[0] - expected).abs() < 1e-9, "{} vs {expected}", lp[0]);
    }

    #[test]
    fn large_preactivations_stay_finite() {
        let mean = Tensor::matrix(1, 1, vec![40.0]).unwrap();
        let log_std = Tensor::matrix(1, 1, vec![LOG_STD_MAX]).unwrap();
        let noise = Tensor::matrix(1, 1, vec![3.0]).unwrap();
        let (_, lp) = squash(&mean, &log_std, &noise);
        assert!(lp[0].is_finite());
    }
}
