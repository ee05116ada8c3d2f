use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tape::{softplus, ParamId, Tape, Var};
use super::tensor::{matmul, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Identity,
    Relu,
    Softplus,
    Tanh,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::Relu => x.max(0.0),
            Activation::Softplus => softplus(x),
            Activation::Tanh => x.tanh(),
        }
    }

    fn record(self, tape: &mut Tape, x: Var) -> Var {
        match self {
            Activation::Identity => x,
            Activation::Relu => tape.relu(x),
            Activation::Softplus => tape.softplus(x),
            Activation::Tanh => tape.tanh(x),
        }
    }
}

/// A contiguous group of output columns sharing one output activation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Head {
    pub width: usize,
    pub activation: Activation,
}

impl Head {
    pub fn new(width: usize, activation: Activation) -> Self {
        Self { width, activation }
    }
}

/// A named trainable tensor.
#[derive(Debug)]
pub struct Param {
    id: ParamId,
    name: String,
    value: Tensor,
}

impl Param {
    pub fn new(name: impl Into<String>, value: Tensor) -> Self {
        Self { id: ParamId::fresh(), name: name.into(), value }
    }

    pub fn id(&self) -> ParamId {
        self.id
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn value(&self) -> &Tensor {
        &self.value
    }

    pub fn value_mut(&mut self) -> &mut Tensor {
        &mut self.value
    }

    /// Copy of this parameter with a new identity.
    pub fn duplicate(&self) -> Self {
        Self::new(self.name.clone(), self.value.clone())
    }
}

/// How a network's parameters enter the tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Grad {
    /// Parameters are recorded as trainable and receive gradients.
    Track,
    /// Parameters are recorded as constants; gradients still reach the input.
    Frozen,
}

/// Anything exposing an ordered list of trainable parameters.
pub trait Parameterized {
    fn params(&self) -> Vec<&Param>;
    fn params_mut(&mut self) -> Vec<&mut Param>;
}

/// Fully connected network: ReLU hidden layers and per-head output activations.
///
/// Weights are stored `[fan_in, fan_out]` so a batch `x: [n, fan_in]` maps to
/// `x · W + b`.
#[derive(Debug)]
pub struct Mlp {
    sizes: Vec<usize>,
    hidden: Activation,
    heads: Vec<Head>,
    weights: Vec<Param>,
    biases: Vec<Param>,
}

/// Uniform bound of the final layer's initial weights and biases.
pub const FINAL_LAYER_INIT: f64 = 3e-3;

impl Mlp {
    /// `sizes` lists every width from input to output; head widths must sum to
    /// the output width.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], heads: Vec<Head>, rng: &mut R) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::Architecture(format!("invalid layer sizes {sizes:?}")));
        }
        let out = *sizes.last().expect("len checked");
        let head_total: usize = heads.iter().map(|h| h.width).sum();
        if head_total != out {
            return Err(Error::Architecture(format!("heads cover {head_total} columns but output width is {out}")));
        }
        let n_layers = sizes.len() - 1;
        let mut weights = Vec::with_capacity(n_layers);
        let mut biases = Vec::with_capacity(n_layers);
        for l in 0..n_layers {
            let (fan_in, fan_out) = (sizes[l], sizes[l + 1]);
            let bound = if l + 1 == n_layers { FINAL_LAYER_INIT } else { 1.0 / (fan_in as f64).sqrt() };
            let w = (0..fan_in * fan_out).map(|_| rng.gen_range(-bound..bound)).collect();
            let b = (0..fan_out).map(|_| rng.gen_range(-bound..bound)).collect();
            weights.push(Param::new(format!("layer{l}.weight"), Tensor::matrix(fan_in, fan_out, w)?));
            biases.push(Param::new(format!("layer{l}.bias"), Tensor::matrix(1, fan_out, b)?));
        }
        Ok(Self { sizes: sizes.to_vec(), hidden: Activation::Relu, heads, weights, biases })
    }

    /// Single-head constructor: `input -> hidden... -> output`.
    pub fn with_hidden<R: Rng + ?Sized>(
        input: usize,
        hidden: &[usize],
        output: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        let mut sizes = vec![input];
        sizes.extend_from_slice(hidden);
        sizes.push(output);
        Self::new(&sizes, vec![Head::new(output, activation)], rng)
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn heads(&self) -> &[Head] {
        &self.heads
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().expect("non-empty")
    }

    pub fn num_layers(&self) -> usize {
        self.weights.len()
    }

    pub fn weight(&self, layer: usize) -> &Param {
        &self.weights[layer]
    }

    pub fn bias(&self, layer: usize) -> &Param {
        &self.biases[layer]
    }

    pub fn weight_mut(&mut self, layer: usize) -> &mut Param {
        &mut self.weights[layer]
    }

    pub fn bias_mut(&mut self, layer: usize) -> &mut Param {
        &mut self.biases[layer]
    }

    /// Sets every final-layer bias column belonging to `head` to `value`.
    pub fn set_head_bias(&mut self, head: usize, value: f64) {
        let start: usize = self.heads[..head].iter().map(|h| h.width).sum();
        let width = self.heads[head].width;
        let last = self.biases.len() - 1;
        for v in &mut self.biases[last].value.data_mut()[start..start + width] {
            *v = value;
        }
    }

    /// Deep copy with fresh parameter identities.
    pub fn duplicate(&self) -> Self {
        Self {
            sizes: self.sizes.clone(),
            hidden: self.hidden,
            heads: self.heads.clone(),
            weights: self.weights.iter().map(Param::duplicate).collect(),
            biases: self.biases.iter().map(Param::duplicate).collect(),
        }
    }

    pub fn same_architecture(&self, other: &Mlp) -> bool {
        self.sizes == other.sizes && self.heads == other.heads && self.hidden == other.hidden
    }

    fn check_input(&self, shape: &[usize]) -> Result<()> {
        let cols = if shape.len() < 2 { 1 } else { shape[1..].iter().product() };
        if shape.is_empty() || cols != self.sizes[0] {
            return Err(Error::Shape {
                context: format!("Mlp layer 0 input (expects width {})", self.sizes[0]),
                expected: vec![shape.first().copied().unwrap_or(0), self.sizes[0]],
                actual: shape.to_vec(),
            });
        }
        Ok(())
    }

    /// Records the forward pass on `tape`.
    pub fn forward(&self, tape: &mut Tape, input: Var, grad: Grad) -> Result<Var> {
        self.check_input(tape.value(input).shape())?;
        let mut h = input;
        let n_layers = self.weights.len();
        for l in 0..n_layers {
            let (w, b) = match grad {
                Grad::Track => (
                    tape.param(self.weights[l].id, self.weights[l].value.clone()),
                    tape.param(self.biases[l].id, self.biases[l].value.clone()),
                ),
                Grad::Frozen => {
                    (tape.constant(self.weights[l].value.clone()), tape.constant(self.biases[l].value.clone()))
                }
            };
            let z = tape.matmul(h, w);
            let z = tape.add_bias(z, b);
            h = if l + 1 < n_layers { self.hidden.record(tape, z) } else { self.record_heads(tape, z) };
        }
        Ok(h)
    }

    fn record_heads(&self, tape: &mut Tape, z: Var) -> Var {
        if self.heads.len() == 1 {
            return self.heads[0].activation.record(tape, z);
        }
        let mut out: Option<Var> = None;
        let mut start = 0;
        for head in &self.heads {
            let part = tape.slice_cols(z, start, start + head.width);
            let part = head.activation.record(tape, part);
            out = Some(match out {
                None => part,
                Some(acc) => tape.concat_cols(acc, part),
            });
            start += head.width;
        }
        out.expect("at least one head")
    }

    /// Forward pass without recording; numerically identical to [`Mlp::forward`].
    pub fn predict(&self, input: &Tensor) -> Result<Tensor> {
        self.check_input(input.shape())?;
        let n = input.rows();
        let mut h = input.data().to_vec();
        let n_layers = self.weights.len();
        for l in 0..n_layers {
            let (k, m) = (self.sizes[l], self.sizes[l + 1]);
            let mut z = matmul(&h, self.weights[l].value.data(), n, k, m);
            let bias = self.biases[l].value.data();
            for row in z.chunks_mut(m) {
                for (o, b) in row.iter_mut().zip(bias) {
                    *o += b;
                }
            }
            if l + 1 < n_layers {
                z.iter_mut().for_each(|v| *v = self.hidden.apply(*v));
            } else {
                for row in z.chunks_mut(m) {
                    let mut start = 0;
                    for head in &self.heads {
                        for v in &mut row[start..start + head.width] {
                            *v = head.activation.apply(*v);
                        }
                        start += head.width;
                    }
                }
            }
            h = z;
        }
        Tensor::matrix(n, self.output_dim(), h)
    }

    pub fn to_snapshot(&self) -> MlpSnapshot {
        MlpSnapshot {
            sizes: self.sizes.clone(),
            heads: self.heads.clone(),
            params: self.params().into_iter().map(|p| (p.name.clone(), p.value.clone())).collect(),
        }
    }

    pub fn from_snapshot(snap: &MlpSnapshot) -> Result<Self> {
        let n_layers = snap.sizes.len().saturating_sub(1);
        if snap.params.len() != 2 * n_layers {
            return Err(Error::Checkpoint(format!("expected {} tensors, found {}", 2 * n_layers, snap.params.len())));
        }
        let mut weights = Vec::with_capacity(n_layers);
        let mut biases = Vec::with_capacity(n_layers);
        for l in 0..n_layers {
            let (wname, w) = &snap.params[l];
            let (bname, b) = &snap.params[n_layers + l];
            if w.shape() != [snap.sizes[l], snap.sizes[l + 1]] || b.numel() != snap.sizes[l + 1] {
                return Err(Error::Checkpoint(format!("layer {l} tensor shapes do not match sizes")));
            }
            weights.push(Param::new(wname.clone(), w.clone()));
            biases.push(Param::new(bname.clone(), b.clone()));
        }
        Ok(Self { sizes: snap.sizes.clone(), hidden: Activation::Relu, heads: snap.heads.clone(), weights, biases })
    }
}

impl Parameterized for Mlp {
    /// Weights of every layer, then biases of every layer.
    fn params(&self) -> Vec<&Param> {
        self.weights.iter().chain(&self.biases).collect()
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        self.weights.iter_mut().chain(self.biases.iter_mut()).collect()
    }
}

/// Serializable parameter dump of an [`Mlp`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpSnapshot {
    pub sizes: Vec<usize>,
    pub heads: Vec<Head>,
    pub params: Vec<(String, Tensor)>,
}

/// Polyak averaging `target <- (1 - tau) * target + tau * online`.
pub fn soft_update(target: &mut Mlp, online: &Mlp, tau: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::InvalidArgument(format!("tau {tau} outside [0, 1]")));
    }
    if !target.same_architecture(online) {
        return Err(Error::Architecture(format!("soft update between {:?} and {:?}", target.sizes, online.sizes)));
    }
    for (t, o) in target.params_mut().into_iter().zip(online.params()) {
        for (tv, ov) in t.value.data_mut().iter_mut().zip(o.value.data()) {
            *tv = (1.0 - tau) * *tv + tau * ov;
        }
    }
    Ok(())
}

/// Overwrites `target` parameters with `online`'s.
pub fn hard_update(target: &mut Mlp, online: &Mlp) -> Result<()> {
    soft_update(target, online, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn identity_layer(act: Activation) -> Mlp {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut net = Mlp::new(&[2, 2], vec![Head::new(2, act)], &mut rng).unwrap();
        *net.weight_mut(0).value_mut() = Tensor::matrix(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        *net.bias_mut(0).value_mut() = Tensor::zeros(&[1, 2]);
        net
    }

    #[test]
    fn identity_layer_passes_input_through() {
        let net = identity_layer(Activation::Identity);
        let out = net.predict(&Tensor::matrix(1, 2, vec![1.0, 2.0]).unwrap()).unwrap();
        assert_eq!(out.data(), &[1.0, 2.0]);
    }

    #[test]
    fn relu_layer_zeroes_negatives() {
        let net = identity_layer(Activation::Relu);
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::matrix(1, 2, vec![-1.0, 3.0]).unwrap());
        let y = net.forward(&mut tape, x, Grad::Track).unwrap();
        assert_eq!(tape.value(y).data(), &[0.0, 3.0]);
    }

    #[test]
    fn wrong_input_width_names_the_layer() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = Mlp::with_hidden(3, &[4], 1, Activation::Identity, &mut rng).unwrap();
        let err = net.predict(&Tensor::zeros(&[2, 2])).unwrap_err();
        assert!(err.to_string().contains("layer 0"), "{err}");
    }

    #[test]
    fn soft_update_edges() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let online = Mlp::with_hidden(2, &[3], 1, Activation::Identity, &mut rng).unwrap();
        let mut target = Mlp::with_hidden(2, &[3], 1, Activation::Identity, &mut rng).unwrap();
        let before = target.to_snapshot();
        soft_update(&mut target, &online, 0.0).unwrap();
        assert_eq!(target.to_snapshot(), before);
        soft_update(&mut target, &online, 1.0).unwrap();
        assert_eq!(target.to_snapshot().params, online.to_snapshot().params);

        let mut t = identity_layer(Activation::Identity);
        let mut o = identity_layer(Activation::Identity);
        t.weight_mut(0).value_mut().data_mut()[0] = 1.0;
        o.weight_mut(0).value_mut().data_mut()[0] = 0.0;
        soft_update(&mut t, &o, 0.005).unwrap();
        assert!((t.weight(0).value().data()[0] - 0.995).abs() < 1e-15);
    }

    #[test]
    fn soft_update_rejects_mismatch() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = Mlp::with_hidden(2, &[3], 1, Activation::Identity, &mut rng).unwrap();
        let mut b = Mlp::with_hidden(2, &[4], 1, Activation::Identity, &mut rng).unwrap();
        assert!(matches!(soft_update(&mut b, &a, 0.5), Err(Error::Architecture(_))));
    }

    #[test]
    fn multi_head_applies_per_head_activation() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut net = Mlp::new(
            &[3, 8, 2],
            vec![Head::new(1, Activation::Identity), Head::new(1, Activation::Softplus)],
            &mut rng,
        )
        .unwrap();
        net.set_head_bias(1, -50.0);
        let x = Tensor::matrix(2, 3, vec![0.1, -0.2, 0.3, 1.0, 2.0, -3.0]).unwrap();
        let mut tape = Tape::new();
        let xv = tape.constant(x.clone());
        let y = net.forward(&mut tape, xv, Grad::Track).unwrap();
        let direct = net.predict(&x).unwrap();
        assert_eq!(tape.value(y), &direct);
        assert!(direct.slice_cols(1, 2).data().iter().all(|&v| v > 0.0));
    }

    #[test]
    fn snapshot_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let net = Mlp::with_hidden(2, &[4, 4], 1, Activation::Softplus, &mut rng).unwrap();
        let back = Mlp::from_snapshot(&net.to_snapshot()).unwrap();
        let x = Tensor::matrix(1, 2, vec![0.3, -0.7]).unwrap();
        assert_eq!(net.predict(&x).unwrap(), back.predict(&x).unwrap());
    }
}
