use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    /// Optimistic exploration and evaluation with one policy.
    OeWac,
    /// Optimistic exploration policy plus a mean-greedy evaluation policy.
    MeWac,
    Sac,
    Oac,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] = [Algorithm::OeWac, Algorithm::MeWac, Algorithm::Sac, Algorithm::Oac];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::OeWac => "oe-wac",
            Algorithm::MeWac => "me-wac",
            Algorithm::Sac => "sac",
            Algorithm::Oac => "oac",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL.into_iter().find(|a| a.name() == s).ok_or_else(|| invalid(format!("unknown algorithm `{s}`")))
    }

    pub fn is_wac(self) -> bool {
        matches!(self, Algorithm::OeWac | Algorithm::MeWac)
    }
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Entropy temperature: fixed, or tuned towards a target entropy
/// (default `-nA`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase", deny_unknown_fields)]
pub enum AlphaMode {
    Fixed { value: f64 },
    Auto { target_entropy: Option<f64> },
}

impl Default for AlphaMode {
    fn default() -> Self {
        AlphaMode::Auto { target_entropy: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WacConfig {
    /// Quantile level of the optimistic bound.
    pub delta: f64,
    /// Weight of the σ anchoring term on synthetic points.
    pub lambda: f64,
    /// Synthetic points per real sample.
    pub rho: f64,
    /// Mean and σ share one trunk instead of two networks.
    pub shared_trunk: bool,
}

impl Default for WacConfig {
    fn default() -> Self {
        Self { delta: 0.95, lambda: 0.6, rho: 0.6, shared_trunk: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OacConfig {
    pub beta_ub: f64,
    /// KL budget of the exploration shift.
    pub delta: f64,
}

impl Default for OacConfig {
    fn default() -> Self {
        Self { beta_ub: 6.5, delta: 18.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AgentConfig {
    pub algorithm: Algorithm,
    pub hidden: Vec<usize>,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub tau: f64,
    /// Overrides the environment discount when set.
    pub gamma: Option<f64>,
    pub alpha: AlphaMode,
    pub wac: WacConfig,
    pub oac: OacConfig,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::OeWac,
            hidden: vec![256, 256],
            learning_rate: 1e-3,
            batch_size: 256,
            tau: 0.005,
            gamma: None,
            alpha: AlphaMode::default(),
            wac: WacConfig::default(),
            oac: OacConfig::default(),
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<()> {
        let w = &self.wac;
        if !(w.delta > 0.0 && w.delta < 1.0) {
            return Err(invalid(format!("wac.delta = {} must lie in (0, 1)", w.delta)));
        }
        if !(w.lambda >= 0.0 && w.lambda.is_finite()) {
            return Err(invalid(format!("wac.lambda = {} must be non-negative", w.lambda)));
        }
        if !(w.rho >= 0.0 && w.rho.is_finite()) {
            return Err(invalid(format!("wac.rho = {} must be non-negative", w.rho)));
        }
        if !(self.oac.delta >= 0.0 && self.oac.beta_ub.is_finite()) {
            return Err(invalid("oac.delta must be non-negative and oac.beta_ub finite"));
        }
        if !(0.0..=1.0).contains(&self.tau) {
            return Err(invalid(format!("tau = {} must lie in [0, 1]", self.tau)));
        }
        if let Some(g) = self.gamma {
            if !(0.0..1.0).contains(&g) {
                return Err(invalid(format!("gamma = {g} must lie in [0, 1)")));
            }
        }
        if self.batch_size == 0 {
            return Err(invalid("batch_size must be positive"));
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(invalid(format!("hidden widths {:?} must be non-empty and positive", self.hidden)));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(invalid("learning_rate must be positive"));
        }
        if let AlphaMode::Fixed { value } = self.alpha {
            if !(value >= 0.0 && value.is_finite()) {
                return Err(invalid(format!("fixed alpha {value} must be non-negative")));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        AgentConfig::default().validate().unwrap();
    }

    #[test]
    fn rejects_bad_delta() {
        for d in [0.0, 1.0, -0.1, 1.5] {
            let mut c = AgentConfig::default();
            c.wac.delta = d;
            assert!(c.validate().is_err(), "{d}");
        }
    }

    #[test]
    fn toml_round_trip() {
        let text = r#"
            algorithm = "me-wac"
            hidden = [64, 64]
            alpha = { mode = "fixed", value = 0.2 }
            [wac]
            lambda = 0.0
        "#;
        let c: AgentConfig = toml::from_str(text).unwrap();
        assert_eq!(c.algorithm, Algorithm::MeWac);
        assert_eq!(c.alpha, AlphaMode::Fixed { value: 0.2 });
        assert_eq!(c.wac.lambda, 0.0);
        assert_eq!(c.wac.delta, 0.95);
        assert!(toml::from_str::<AgentConfig>("learning_rat = 1.0").is_err());
    }

    #[test]
    fn names_round_trip() {
        for a in Algorithm::ALL {
            assert_eq!(Algorithm::parse(a.name()).unwrap(), a);
        }
    }
}
