use serde::{Deserialize, Serialize};

use super::mlp::Param;
use super::tape::Gradients;
use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Adam moments for an ordered parameter list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub config: AdamConfig,
    step_count: u64,
    first_moment: Vec<Tensor>,
    second_moment: Vec<Tensor>,
}

impl AdamState {
    pub fn new(config: AdamConfig, params: &[&Param]) -> Self {
        let zeros: Vec<Tensor> = params.iter().map(|p| Tensor::zeros(p.value().shape())).collect();
        Self { config, step_count: 0, first_moment: zeros.clone(), second_moment: zeros }
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    /// One bias-corrected Adam update. Parameters absent from `grads` are
    /// treated as having zero gradient.
    pub fn step(&mut self, params: Vec<&mut Param>, grads: &Gradients) -> Result<()> {
        if params.len() != self.first_moment.len() {
            return Err(Error::Architecture(format!(
                "optimizer tracks {} tensors, got {}",
                self.first_moment.len(),
                params.len()
            )));
        }
        for p in &params {
            if let Some(g) = grads.param(p.id()) {
                if !g.is_finite() {
                    return Err(Error::NonFinite(format!("gradient of {}", p.name())));
                }
            }
        }
        self.step_count += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let t = self.step_count as f64;
        let bc1 = 1.0 - beta1.powf(t);
        let bc2 = 1.0 - beta2.powf(t);
        for ((p, m), v) in params.into_iter().zip(&mut self.first_moment).zip(&mut self.second_moment) {
            let g = grads.param(p.id());
            let data = p.value_mut().data_mut();
            for i in 0..data.len() {
                let gi = g.map_or(0.0, |g| g.data()[i]);
                let mi = &mut m.data_mut()[i];
                *mi = beta1 * *mi + (1.0 - beta1) * gi;
                let vi = &mut v.data_mut()[i];
                *vi = beta2 * *vi + (1.0 - beta2) * gi * gi;
                let m_hat = m.data()[i] / bc1;
                let v_hat = v.data()[i] / bc2;
                data[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}
