use crate::diff::{Grad, Mlp, Tape, Tensor};
use crate::error::Result;

use super::config::OacConfig;
use super::policy::SquashedGaussianPolicy;

/// Optimistic shift of the pre-squash Gaussian for one state.
#[derive(Debug, Clone, PartialEq)]
pub struct OacShift {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// `KL(shifted || original)`; at most the configured budget.
    pub kl: f64,
}

/// Shifts the policy mean along the gradient of
/// `Q_UB = mean(Q) + beta_ub * |Q1 - Q2| / 2`, with step length set so the
/// KL to the unshifted policy equals the budget. A vanishing gradient leaves
/// the policy unchanged.
pub fn oac_shift(
    policy: &SquashedGaussianPolicy,
    qs: &[Mlp; 2],
    state: &[f64],
    config: &OacConfig,
) -> Result<OacShift> {
    let s = Tensor::matrix(1, state.len(), state.to_vec())?;
    let dist = policy.distribution(&s)?;
    let mean = dist.mean.data().to_vec();
    let std: Vec<f64> = dist.log_std.data().iter().map(|v| v.exp()).collect();

    let mut tape = Tape::new();
    let pre = tape.input(dist.mean.clone());
    let a = tape.tanh(pre);
    let sv = tape.constant(s);
    let x = tape.concat_cols(sv, a);
    let q1 = qs[0].forward(&mut tape, x, Grad::Frozen)?;
    let q2 = qs[1].forward(&mut tape, x, Grad::Frozen)?;
    let sum = tape.add(q1, q2);
    let mean_q = tape.scale(sum, 0.5);
    let diff = tape.sub(q1, q2);
    let sign = if tape.value(diff).item() >= 0.0 { 0.5 } else { -0.5 };
    let spread = tape.scale(diff, sign * config.beta_ub);
    let ub = tape.add(mean_q, spread);
    let grads = tape.backward(ub)?;
    let g = grads.wrt(pre).map(|t| t.data().to_vec()).unwrap_or_else(|| vec![0.0; mean.len()]);

    let sigma_g: Vec<f64> = g.iter().zip(&std).map(|(gi, si)| si * si * gi).collect();
    let norm = g.iter().zip(&sigma_g).map(|(gi, sg)| gi * sg).sum::<f64>().sqrt();
    if !(norm > 1e-12) || config.delta == 0.0 {
        return Ok(OacShift { mean, std, kl: 0.0 });
    }
    let step = (2.0 * config.delta).sqrt() / norm;
    let shifted: Vec<f64> = mean.iter().zip(&sigma_g).map(|(m, sg)| m + step * sg).collect();
    let kl = 0.5 * shifted.iter().zip(&mean).zip(&std).map(|((a, b), s)| ((a - b) / s).powi(2)).sum::<f64>();
    Ok(OacShift { mean: shifted, std, kl })
}

/// Squashed exploration action `tanh(shifted_mean + std * eps)`.
pub fn oac_exploration_action(shift: &OacShift, eps: &[f64]) -> Vec<f64> {
    shift.mean.iter().zip(&shift.std).zip(eps).map(|((m, s), e)| (m + s * e).tanh()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diff::Activation;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn setup() -> (SquashedGaussianPolicy, [Mlp; 2]) {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pol = SquashedGaussianPolicy::new(2, 2, &[8], &mut rng).unwrap();
        let q = || Mlp::with_hidden(4, &[8], 1, Activation::Identity, &mut ChaCha8Rng::seed_from_u64(9));
        let mut q1 = q().unwrap();
        let mut q2 = Mlp::with_hidden(4, &[8], 1, Activation::Identity, &mut rng).unwrap();
        // large final layers so the gradient is well away from zero
        for net in [&mut q1, &mut q2] {
            let last = net.num_layers() - 1;
            net.weight_mut(last).value_mut().data_mut().iter_mut().for_each(|w| *w *= 300.0);
        }
        (pol, [q1, q2])
    }

    #[test]
    fn kl_meets_budget() {
        let (pol, qs) = setup();
        let cfg = OacConfig::default();
        let shift = oac_shift(&pol, &qs, &[0.2, -0.3], &cfg).unwrap();
        assert!((shift.kl - cfg.delta).abs() < 1e-8 * cfg.delta, "{}", shift.kl);
    }

    #[test]
    fn zero_budget_is_identity() {
        let (pol, qs) = setup();
        let cfg = OacConfig { beta_ub: 0.0, delta: 0.0 };
        let s = [0.5, 0.1];
        let shift = oac_shift(&pol, &qs, &s, &cfg).unwrap();
        let dist = pol.distribution(&Tensor::matrix(1, 2, s.to_vec()).unwrap()).unwrap();
        assert_eq!(shift.mean, dist.mean.data());
        assert_eq!(shift.kl, 0.0);
        let eps = [0.3, -1.2];
        let (a, _) = pol
            .sample_with_noise(&Tensor::matrix(1, 2, s.to_vec()).unwrap(), &Tensor::matrix(1, 2, eps.to_vec()).unwrap())
            .unwrap();
        assert_eq!(oac_exploration_action(&shift, &eps), a.data());
    }
}
