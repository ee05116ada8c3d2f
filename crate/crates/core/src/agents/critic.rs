use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::diff::{soft_update, Activation, Grad, Head, Mlp, MlpSnapshot, Param, Parameterized, Tape, Tensor, Var};
use crate::error::{invalid, Result};

/// Inverse of `softplus` for positive arguments.
pub fn softplus_inverse(y: f64) -> f64 {
    y + (-(-y).exp_m1()).ln()
}

#[derive(Debug)]
enum Nets {
    Separate {
        mean: Mlp,
        std: Mlp,
    },
    /// One trunk with an identity head for the mean and a softplus head for σ.
    Shared(Mlp),
}

/// Gaussian posterior over Q-values: `(mu(s, a), sigma(s, a))`.
///
/// The σ output passes through softplus and starts at `sigma0` via the final
/// bias.
#[derive(Debug)]
pub struct DistributionalCritic {
    nets: Nets,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "layout", rename_all = "lowercase")]
pub enum CriticSnapshot {
    Separate { mean: MlpSnapshot, std: MlpSnapshot },
    Shared { net: MlpSnapshot },
}

impl DistributionalCritic {
    pub fn new<R: Rng + ?Sized>(
        input_dim: usize,
        hidden: &[usize],
        sigma0: f64,
        shared: bool,
        rng: &mut R,
    ) -> Result<Self> {
        if !(sigma0 > 0.0 && sigma0.is_finite()) {
            return Err(invalid(format!("prior std {sigma0} must be positive")));
        }
        let bias = softplus_inverse(sigma0);
        let nets = if shared {
            let mut sizes = vec![input_dim];
            sizes.extend_from_slice(hidden);
            sizes.push(2);
            let heads = vec![Head::new(1, Activation::Identity), Head::new(1, Activation::Softplus)];
            let mut net = Mlp::new(&sizes, heads, rng)?;
            net.set_head_bias(1, bias);
            Nets::Shared(net)
        } else {
            let mean = Mlp::with_hidden(input_dim, hidden, 1, Activation::Identity, rng)?;
            let mut std = Mlp::with_hidden(input_dim, hidden, 1, Activation::Softplus, rng)?;
            std.set_head_bias(0, bias);
            Nets::Separate { mean, std }
        };
        Ok(Self { nets })
    }

    pub fn is_shared(&self) -> bool {
        matches!(self.nets, Nets::Shared(_))
    }

    /// The network producing the mean (the whole trunk when shared).
    pub fn mean_net(&self) -> &Mlp {
        match &self.nets {
            Nets::Separate { mean, .. } => mean,
            Nets::Shared(net) => net,
        }
    }

    pub fn mean_net_mut(&mut self) -> &mut Mlp {
        match &mut self.nets {
            Nets::Separate { mean, .. } => mean,
            Nets::Shared(net) => net,
        }
    }

    pub fn std_net(&self) -> &Mlp {
        match &self.nets {
            Nets::Separate { std, .. } => std,
            Nets::Shared(net) => net,
        }
    }

    pub fn std_net_mut(&mut self) -> &mut Mlp {
        match &mut self.nets {
            Nets::Separate { std, .. } => std,
            Nets::Shared(net) => net,
        }
    }

    /// `(mu, sigma)` as `[n, 1]` vars.
    pub fn forward(&self, tape: &mut Tape, input: Var, grad: Grad) -> Result<(Var, Var)> {
        match &self.nets {
            Nets::Separate { mean, std } => Ok((mean.forward(tape, input, grad)?, std.forward(tape, input, grad)?)),
            Nets::Shared(net) => {
                let out = net.forward(tape, input, grad)?;
                Ok((tape.slice_cols(out, 0, 1), tape.slice_cols(out, 1, 2)))
            }
        }
    }

    /// Only the σ output; skips the mean network when the nets are separate.
    pub fn sigma_forward(&self, tape: &mut Tape, input: Var, grad: Grad) -> Result<Var> {
        match &self.nets {
            Nets::Separate { std, .. } => std.forward(tape, input, grad),
            Nets::Shared(net) => {
                let out = net.forward(tape, input, grad)?;
                Ok(tape.slice_cols(out, 1, 2))
            }
        }
    }

    pub fn predict(&self, input: &Tensor) -> Result<(Vec<f64>, Vec<f64>)> {
        match &self.nets {
            Nets::Separate { mean, std } => Ok((mean.predict(input)?.into_data(), std.predict(input)?.into_data())),
            Nets::Shared(net) => {
                let out = net.predict(input)?;
                Ok((out.slice_cols(0, 1).into_data(), out.slice_cols(1, 2).into_data()))
            }
        }
    }

    pub fn predict_sigma(&self, input: &Tensor) -> Result<Vec<f64>> {
        sigma_of(self.std_net(), self.is_shared(), input)
    }

    pub fn duplicate(&self) -> Self {
        let nets = match &self.nets {
            Nets::Separate { mean, std } => Nets::Separate { mean: mean.duplicate(), std: std.duplicate() },
            Nets::Shared(net) => Nets::Shared(net.duplicate()),
        };
        Self { nets }
    }

    /// Polyak averaging `target <- (1 - tau) target + tau online`.
    pub fn soft_update_from(&mut self, online: &Self, tau: f64) -> Result<()> {
        match (&mut self.nets, &online.nets) {
            (Nets::Separate { mean: tm, std: ts }, Nets::Separate { mean, std }) => {
                soft_update(tm, mean, tau)?;
                soft_update(ts, std, tau)
            }
            (Nets::Shared(t), Nets::Shared(o)) => soft_update(t, o, tau),
            _ => Err(crate::Error::Architecture("critic layouts differ".into())),
        }
    }

    pub fn to_snapshot(&self) -> CriticSnapshot {
        match &self.nets {
            Nets::Separate { mean, std } => {
                CriticSnapshot::Separate { mean: mean.to_snapshot(), std: std.to_snapshot() }
            }
            Nets::Shared(net) => CriticSnapshot::Shared { net: net.to_snapshot() },
        }
    }

    pub fn from_snapshot(snap: &CriticSnapshot) -> Result<Self> {
        let nets = match snap {
            CriticSnapshot::Separate { mean, std } => {
                Nets::Separate { mean: Mlp::from_snapshot(mean)?, std: Mlp::from_snapshot(std)? }
            }
            CriticSnapshot::Shared { net } => Nets::Shared(Mlp::from_snapshot(net)?),
        };
        Ok(Self { nets })
    }
}

fn sigma_of(net: &Mlp, shared: bool, input: &Tensor) -> Result<Vec<f64>> {
    let out = net.predict(input)?;
    Ok(if shared { out.slice_cols(1, 2).into_data() } else { out.into_data() })
}

impl Parameterized for DistributionalCritic {
    fn params(&self) -> Vec<&Param> {
        match &self.nets {
            Nets::Separate { mean, std } => mean.params().into_iter().chain(std.params()).collect(),
            Nets::Shared(net) => net.params(),
        }
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        match &mut self.nets {
            Nets::Separate { mean, std } => mean.params_mut().into_iter().chain(std.params_mut()).collect(),
            Nets::Shared(net) => net.params_mut(),
        }
    }
}

/// Frozen copy of each critic's σ network taken at the start of an epoch.
#[derive(Debug)]
pub struct SigmaSnapshot {
    nets: Vec<(Mlp, bool)>,
}

impl SigmaSnapshot {
    pub fn capture(critics: &[DistributionalCritic]) -> Self {
        Self { nets: critics.iter().map(|c| (c.std_net().duplicate(), c.is_shared())).collect() }
    }

    pub fn len(&self) -> usize {
        self.nets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nets.is_empty()
    }

    /// Snapshot σ of critic `i` at `input`.
    pub fn sigma(&self, i: usize, input: &Tensor) -> Result<Vec<f64>> {
        let (net, shared) = &self.nets[i];
        sigma_of(net, *shared, input)
    }

    pub fn to_snapshots(&self) -> Vec<(MlpSnapshot, bool)> {
        self.nets.iter().map(|(n, s)| (n.to_snapshot(), *s)).collect()
    }

    pub fn from_snapshots(snaps: &[(MlpSnapshot, bool)]) -> Result<Self> {
        Ok(Self { nets: snaps.iter().map(|(n, s)| Ok((Mlp::from_snapshot(n)?, *s))).collect::<Result<_>>()? })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn softplus_inverse_round_trips() {
        for y in [1e-6, 0.5, 1.0, 28.87, 441.7] {
            let x = softplus_inverse(y);
            assert!((crate::diff::softplus(x) - y).abs() < 1e-9 * y.max(1.0), "{y}");
        }
    }

    #[test]
    fn sigma_starts_near_prior() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for shared in [false, true] {
            let c = DistributionalCritic::new(3, &[16, 16], 28.87, shared, &mut rng).unwrap();
            let x = Tensor::matrix(5, 3, (0..15).map(|i| (i as f64 * 0.13).cos()).collect()).unwrap();
            let (mu, sigma) = c.predict(&x).unwrap();
            assert!(mu.iter().all(|m| m.abs() < 0.1));
            assert!(sigma.iter().all(|s| (s - 28.87).abs() < 0.1), "{sigma:?}");
            assert_eq!(c.predict_sigma(&x).unwrap(), sigma);
        }
    }

    #[test]
    fn tape_matches_predict() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for shared in [false, true] {
            let c = DistributionalCritic::new(2, &[8], 3.0, shared, &mut rng).unwrap();
            let x = Tensor::matrix(3, 2, vec![0.1, -0.4, 0.9, 0.2, -1.0, 1.0]).unwrap();
            let (mu, sigma) = c.predict(&x).unwrap();
            let mut tape = Tape::new();
            let v = tape.constant(x);
            let (m, s) = c.forward(&mut tape, v, Grad::Track).unwrap();
            assert_eq!(tape.value(m).data(), &mu[..]);
            assert_eq!(tape.value(s).data(), &sigma[..]);
        }
    }

    #[test]
    fn snapshot_is_frozen() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut c = DistributionalCritic::new(2, &[8], 3.0, false, &mut rng).unwrap();
        let snap = SigmaSnapshot::capture(std::slice::from_ref(&c));
        let x = Tensor::matrix(1, 2, vec![0.3, 0.3]).unwrap();
        let before = snap.sigma(0, &x).unwrap();
        for p in c.params_mut() {
            p.value_mut().data_mut().iter_mut().for_each(|v| *v += 0.5);
        }
        assert_eq!(snap.sigma(0, &x).unwrap(), before);
        assert_ne!(c.predict_sigma(&x).unwrap(), before);
    }
}
