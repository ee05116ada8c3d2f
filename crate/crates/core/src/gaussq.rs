//! Closed-form Wasserstein-2 geometry of one-dimensional Gaussians.
//!
//! For `N(m1, s1)` and `N(m2, s2)` the optimal coupling is the quantile
//! coupling, so `W2² = (m1 - m2)² + (s1 - s2)²` and the barycenter of a
//! weighted family averages means and standard deviations separately.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Gaussian Q-posterior with mean and standard deviation in Q-value units.
///
/// A zero std is admitted: it is the posterior of a terminal bootstrap
/// target and the fixed point of a fully resolved state-action pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianPosterior {
    pub mean: f64,
    pub std: f64,
}

impl GaussianPosterior {
    pub fn new(mean: f64, std: f64) -> Result<Self> {
        if !mean.is_finite() || !std.is_finite() || std < 0.0 {
            return Err(invalid(format!("posterior N({mean}, {std}) is not valid")));
        }
        Ok(Self { mean, std })
    }

    /// Point mass at `value`.
    pub fn dirac(value: f64) -> Self {
        Self { mean: value, std: 0.0 }
    }

    /// Law of `reward + discount * X` for `X ~ self`.
    pub fn affine(self, reward: f64, discount: f64) -> Self {
        Self { mean: reward + discount * self.mean, std: discount.abs() * self.std }
    }
}

/// Range of achievable Q-values given reward bounds and a discount.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValueBounds {
    pub q_min: f64,
    pub q_max: f64,
}

impl ValueBounds {
    pub fn new(q_min: f64, q_max: f64) -> Result<Self> {
        if !(q_min <= q_max) {
            return Err(invalid(format!("q_min {q_min} exceeds q_max {q_max}")));
        }
        Ok(Self { q_min, q_max })
    }

    /// `[r_min, r_max] / (1 - gamma)`.
    pub fn from_rewards(r_min: f64, r_max: f64, gamma: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&gamma) {
            return Err(invalid(format!("gamma {gamma} outside [0, 1)")));
        }
        Self::new(r_min / (1.0 - gamma), r_max / (1.0 - gamma))
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.q_min + self.q_max)
    }
}

pub fn w2_gaussian(p: GaussianPosterior, q: GaussianPosterior) -> f64 {
    w2_squared(p, q).sqrt()
}

pub fn w2_squared(p: GaussianPosterior, q: GaussianPosterior) -> f64 {
    let dm = p.mean - q.mean;
    let ds = p.std - q.std;
    dm * dm + ds * ds
}

/// Weighted W2 barycenter; weights must be non-negative and sum to one.
pub fn barycenter_gaussian(items: &[(f64, GaussianPosterior)]) -> Result<GaussianPosterior> {
    if items.is_empty() {
        return Err(invalid("barycenter of an empty family"));
    }
    if let Some((w, _)) = items.iter().find(|(w, _)| !(*w >= 0.0)) {
        return Err(invalid(format!("negative barycenter weight {w}")));
    }
    let total: f64 = items.iter().map(|(w, _)| w).sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(invalid(format!("barycenter weights sum to {total}, not 1")));
    }
    let mean = items.iter().map(|(w, p)| w * p.mean).sum();
    let std = items.iter().map(|(w, p)| w * p.std).sum();
    Ok(GaussianPosterior { mean, std })
}

/// Standard normal CDF.
pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Complementary error function, accurate to about 1e-15 relative.
///
/// Uses the Maclaurin series for `|x| < 2` and a continued fraction beyond.
pub fn erfc(x: f64) -> f64 {
    if x < 0.0 {
        return 2.0 - erfc(-x);
    }
    if x < 2.0 {
        return 1.0 - erf_series(x);
    }
    // Lentz evaluation of erfc(x) = exp(-x²)/sqrt(pi) * 1/(x + 1/2/(x + 1/(x + 3/2/(x + ...))))
    let tiny = 1e-300;
    let mut f = x;
    let mut c = x;
    let mut d = 0.0;
    for n in 1..300 {
        let a = n as f64 * 0.5;
        d = x + a * d;
        if d.abs() < tiny {
            d = tiny;
        }
        c = x + a / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = 1.0 / d;
        let delta = c * d;
        f *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            break;
        }
    }
    (-x * x).exp() / (f * std::f64::consts::PI.sqrt())
}

fn erf_series(x: f64) -> f64 {
    // erf(x) = 2/sqrt(pi) * sum_n (-1)^n x^(2n+1) / (n! (2n+1))
    let x2 = x * x;
    let mut term = x;
    let mut sum = x;
    for n in 1..200 {
        term *= -x2 / n as f64;
        let contrib = term / (2 * n + 1) as f64;
        sum += contrib;
        if contrib.abs() < 1e-17 * sum.abs() {
            break;
        }
    }
    2.0 / std::f64::consts::PI.sqrt() * sum
}

/// Inverse of the standard normal CDF on `(0, 1)`.
///
/// Acklam's rational approximation (relative error ~1e-9) followed by one
/// Halley refinement against [`std_normal_cdf`].
#[allow(clippy::excessive_precision)]
pub fn std_normal_quantile(delta: f64) -> Result<f64> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(invalid(format!("quantile level {delta} outside (0, 1)")));
    }
    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.383577518672690e+02,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00, 3.754408661907416e+00];
    const P_LOW: f64 = 0.02425;

    if delta == 0.5 {
        return Ok(0.0);
    }
    let x = if delta < P_LOW {
        let q = (-2.0 * delta.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if delta <= 1.0 - P_LOW {
        let q = delta - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - delta).ln()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };

    // Halley step on e = Phi(x) - delta, evaluated on the accurate tail side
    let e =
        if delta < 0.5 { std_normal_cdf(x) - delta } else { (1.0 - delta) - 0.5 * erfc(x / std::f64::consts::SQRT_2) };
    let u = e * (2.0 * std::f64::consts::PI).sqrt() * (0.5 * x * x).exp();
    Ok(x - u / (1.0 + 0.5 * x * u))
}

/// Optimistic bound `mean + std * Phi^-1(delta)`.
pub fn upper_bound(p: GaussianPosterior, delta: f64) -> Result<f64> {
    Ok(p.mean + p.std * std_normal_quantile(delta)?)
}

/// Standard deviation of the uniform law on `[q_min, q_max]`.
pub fn prior_std(bounds: ValueBounds) -> f64 {
    (bounds.q_max - bounds.q_min) / 12f64.sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn g(m: f64, s: f64) -> GaussianPosterior {
        GaussianPosterior::new(m, s).unwrap()
    }

    #[test]
    fn distance_examples() {
        assert_eq!(w2_gaussian(g(0.0, 1.0), g(0.0, 1.0)), 0.0);
        assert!((w2_squared(g(1.0, 2.0), g(3.0, 5.0)) - 13.0).abs() < 1e-12);
    }

    #[test]
    fn barycenter_examples() {
        let p = g(0.3, 0.7);
        assert_eq!(barycenter_gaussian(&[(1.0, p)]).unwrap(), p);
        let b = barycenter_gaussian(&[(0.5, g(0.0, 1.0)), (0.5, g(2.0, 3.0))]).unwrap();
        assert!((b.mean - 1.0).abs() < 1e-15 && (b.std - 2.0).abs() < 1e-15);
        let same = barycenter_gaussian(&[(0.2, p), (0.3, p), (0.5, p)]).unwrap();
        assert!((same.mean - p.mean).abs() < 1e-15 && (same.std - p.std).abs() < 1e-15);
    }

    #[test]
    fn barycenter_rejects_bad_weights() {
        assert!(barycenter_gaussian(&[(0.5, g(0.0, 1.0)), (0.4, g(0.0, 1.0))]).is_err());
        assert!(barycenter_gaussian(&[(1.5, g(0.0, 1.0)), (-0.5, g(0.0, 1.0))]).is_err());
        assert!(barycenter_gaussian(&[]).is_err());
    }

    #[test]
    fn quantile_examples() {
        assert_eq!(std_normal_quantile(0.5).unwrap(), 0.0);
        assert!((std_normal_quantile(0.95).unwrap() - 1.6448536269514722).abs() < 1e-12);
        for i in 1..1000 {
            let d = i as f64 / 1000.0;
            let a = std_normal_quantile(d).unwrap();
            let b = std_normal_quantile(1.0 - d).unwrap();
            assert!((a + b).abs() < 1e-9, "{d}: {a} vs {b}");
        }
        assert!(std_normal_quantile(0.0).is_err());
        assert!(std_normal_quantile(1.0).is_err());
        assert!(std_normal_quantile(f64::NAN).is_err());
    }

    #[test]
    fn quantile_inverts_cdf_in_tails() {
        for &d in &[1e-12, 1e-8, 1e-4, 0.01, 0.3, 0.7, 0.99, 1.0 - 1e-6] {
            let x = std_normal_quantile(d).unwrap();
            let back = std_normal_cdf(x);
            assert!(((back - d) / d.min(1.0 - d)).abs() < 1e-9, "{d}: {back}");
        }
    }

    #[test]
    fn upper_bound_examples() {
        assert_eq!(upper_bound(g(2.0, 3.0), 0.5).unwrap(), 2.0);
        assert!((upper_bound(g(0.0, 1.0), 0.95).unwrap() - 1.6449).abs() < 1e-4);
        let mut prev = f64::NEG_INFINITY;
        for i in 1..100 {
            let u = upper_bound(g(1.0, 2.0), i as f64 / 100.0).unwrap();
            assert!(u > prev);
            prev = u;
        }
    }

    #[test]
    fn prior_std_examples() {
        assert_eq!(prior_std(ValueBounds::new(3.0, 3.0).unwrap()), 0.0);
        let b = ValueBounds::from_rewards(0.0, 1.0, 0.99).unwrap();
        assert!((b.q_max - 100.0).abs() < 1e-9 && b.q_min == 0.0);
        assert!((prior_std(b) - 28.867513459481287).abs() < 1e-9);
        let b = ValueBounds::from_rewards(-1.0, 1.0, 0.9).unwrap();
        assert!((prior_std(b) - 20.0 / 12f64.sqrt()).abs() < 1e-12);
        assert!((prior_std(b) - 5.7735).abs() < 1e-4);
    }

    #[test]
    fn invalid_posteriors_rejected() {
        assert!(GaussianPosterior::new(0.0, -1.0).is_err());
        assert!(GaussianPosterior::new(f64::NAN, 1.0).is_err());
        assert!(ValueBounds::new(2.0, 1.0).is_err());
    }
}
