#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wac_core::agents::{Batch, DistributionalCritic, SquashedGaussianPolicy};
use wac_core::diff::{Activation, Mlp, Tensor};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Tensor {
    Tensor::matrix(rows, cols, (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

pub fn gaussian(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Tensor {
    Tensor::matrix(rows, cols, (0..rows * cols).map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal)).collect())
        .unwrap()
}

/// Random batch in normalized coordinates, roughly one terminal in five.
pub fn batch(n: usize, ns: usize, na: usize, rng: &mut ChaCha8Rng) -> Batch {
    Batch {
        states: uniform(n, ns, rng),
        actions: uniform(n, na, rng),
        rewards: (0..n).map(|_| rng.gen_range(-2.0..1.0)).collect(),
        next_states: uniform(n, ns, rng),
        terminals: (0..n).map(|_| rng.gen_bool(0.2)).collect(),
    }
}

pub fn critics(
    input: usize,
    hidden: &[usize],
    sigma0: f64,
    shared: bool,
    rng: &mut ChaCha8Rng,
) -> Vec<DistributionalCritic> {
    (0..2).map(|_| DistributionalCritic::new(input, hidden, sigma0, shared, rng).unwrap()).collect()
}

pub fn scalar_critics(input: usize, hidden: &[usize], rng: &mut ChaCha8Rng) -> Vec<Mlp> {
    (0..2).map(|_| Mlp::with_hidden(input, hidden, 1, Activation::Identity, rng).unwrap()).collect()
}

pub fn policy(ns: usize, na: usize, hidden: &[usize], rng: &mut ChaCha8Rng) -> SquashedGaussianPolicy {
    SquashedGaussianPolicy::new(ns, na, hidden, rng).unwrap()
}
