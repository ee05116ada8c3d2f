//! Uniform replay memory and the synthetic-point generator used by the
//! uncertainty regularizer.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::envs::{EnvSpec, Transition};
use crate::error::{Error, Result};

/// Ring buffer of transitions; the oldest entry is overwritten once full.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayBuffer {
    capacity: usize,
    storage: Vec<Transition>,
    cursor: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self { capacity, storage: Vec::new(), cursor: 0 }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.storage.len()
    }

    pub fn is_empty(&self) -> bool {
        self.storage.is_empty()
    }

    pub fn push(&mut self, t: Transition) {
        if self.storage.len() < self.capacity {
            self.storage.push(t);
        } else {
            self.storage[self.cursor] = t;
        }
        self.cursor = (self.cursor + 1) % self.capacity;
    }

    /// Stored transitions from oldest to newest.
    pub fn iter_chronological(&self) -> impl Iterator<Item = &Transition> {
        let split = if self.storage.len() < self.capacity { 0 } else { self.cursor };
        self.storage[split..].iter().chain(&self.storage[..split])
    }

    /// `n` draws, uniform with replacement.
    pub fn sample_batch<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Vec<&Transition>> {
        if self.storage.is_empty() {
            return Err(Error::EmptyBuffer);
        }
        Ok((0..n).map(|_| &self.storage[rng.gen_range(0..self.storage.len())]).collect())
    }
}

/// Number of synthetic points paired with a real batch of `batch` samples.
pub fn synthetic_count(rho: f64, batch: usize) -> usize {
    (rho * batch as f64).round().max(0.0) as usize
}

/// `m` points drawn uniformly from `[-1, 1]^(nS + nA)`.
pub fn synthetic_batch<R: Rng + ?Sized>(spec: &EnvSpec, m: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let dim = spec.input_dim();
    (0..m).map(|_| (0..dim).map(|_| rng.gen_range(-1.0..=1.0)).collect()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::EnvConfig;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn t(i: usize) -> Transition {
        Transition {
            state: vec![i as f64],
            action: vec![0.0],
            reward: i as f64,
            next_state: vec![i as f64 + 1.0],
            terminal: false,
        }
    }

    #[test]
    fn push_and_evict() {
        let mut b = ReplayBuffer::new(2);
        b.push(t(0));
        assert_eq!(b.len(), 1);
        b.push(t(1));
        b.push(t(2));
        let kept: Vec<f64> = b.iter_chronological().map(|t| t.reward).collect();
        assert_eq!(kept, vec![1.0, 2.0]);
    }

    #[test]
    fn sample_from_single_entry() {
        let mut b = ReplayBuffer::new(8);
        b.push(t(3));
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let batch = b.sample_batch(4, &mut rng).unwrap();
        assert_eq!(batch.len(), 4);
        assert!(batch.iter().all(|x| **x == t(3)));
    }

    #[test]
    fn empty_buffer_rejected() {
        let b = ReplayBuffer::new(4);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(b.sample_batch(1, &mut rng), Err(Error::EmptyBuffer)));
    }

    #[test]
    fn batch_of_256_from_1000() {
        let mut b = ReplayBuffer::new(2000);
        (0..1000).for_each(|i| b.push(t(i)));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let batch = b.sample_batch(256, &mut rng).unwrap();
        assert_eq!(batch.len(), 256);
        assert!(batch.iter().all(|x| x.reward < 1000.0));
    }

    #[test]
    fn synthetic_counts() {
        assert_eq!(synthetic_count(0.0, 256), 0);
        assert_eq!(synthetic_count(0.6, 256), 154);
        assert_eq!(synthetic_count(1.0, 256), 256);
    }

    #[test]
    fn synthetic_points_stay_in_cube() {
        let env = EnvConfig::by_name("point1").unwrap().build().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let pts = synthetic_batch(env.spec(), 1000, &mut rng);
        assert_eq!(pts.len(), 1000);
        assert!(pts.iter().all(|p| p.len() == 6 && p.iter().all(|v| (-1.0..=1.0).contains(v))));
        assert!(synthetic_batch(env.spec(), 0, &mut rng).is_empty());
    }
}
