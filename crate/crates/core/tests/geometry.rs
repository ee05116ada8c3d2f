mod common;

use common::rng;
use proptest::prelude::*;
use rand::Rng;
use wac_core::gaussq::{
    barycenter_gaussian, prior_std, std_normal_cdf, std_normal_quantile, upper_bound, w2_gaussian, w2_squared,
    GaussianPosterior, ValueBounds,
};

fn g(mean: f64, std: f64) -> GaussianPosterior {
    GaussianPosterior::new(mean, std).unwrap()
}

/// `int_0^1 (F^-1(u) - G^-1(u))² du` with `u = Phi(z)`, Simpson's rule in `z`.
/// Quantiles go through the library's inverse CDF, mirrored for `z > 0`.
fn w2_squared_by_coupling(p: GaussianPosterior, q: GaussianPosterior) -> f64 {
    let (lo, hi, n) = (-10.0, 10.0, 8000);
    let h = (hi - lo) / n as f64;
    let f = |z: f64| {
        let level = if z <= 0.0 {
            std_normal_quantile(std_normal_cdf(z))
        } else {
            std_normal_quantile(std_normal_cdf(-z)).map(|v| -v)
        };
        let Ok(level) = level else { return 0.0 };
        let d = (p.mean + p.std * level) - (q.mean + q.std * level);
        d * d * (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
    };
    let mut acc = f(lo) + f(hi);
    for k in 1..n {
        acc += if k % 2 == 1 { 4.0 } else { 2.0 } * f(lo + k as f64 * h);
    }
    acc * h / 3.0
}

fn weighted_cost(items: &[(f64, GaussianPosterior)], m: f64, s: f64) -> f64 {
    items.iter().map(|(w, p)| w * ((m - p.mean).powi(2) + (s - p.std).powi(2))).sum()
}

/// Coordinate-wise shrinking grid search for the weighted W2² minimizer.
fn barycenter_by_search(items: &[(f64, GaussianPosterior)]) -> (f64, f64) {
    let (mut m, mut s) = (0.0, 1.0);
    let mut h = 8.0;
    while h > 1e-7 {
        let mut best = (weighted_cost(items, m, s), m, s);
        for i in -8..=8 {
            for j in -8..=8 {
                let (mm, ss) = (m + h * i as f64 / 8.0, (s + h * j as f64 / 8.0).max(0.0));
                let c = weighted_cost(items, mm, ss);
                if c < best.0 {
                    best = (c, mm, ss);
                }
            }
        }
        (m, s) = (best.1, best.2);
        h /= 3.0;
    }
    (m, s)
}

#[test]
fn closed_form_matches_quantile_coupling() {
    let mut r = rng(11);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let p = g(r.gen_range(-5.0..5.0), r.gen_range(0.0..3.0));
        let q = g(r.gen_range(-5.0..5.0), r.gen_range(0.0..3.0));
        worst = worst.max((w2_squared(p, q) - w2_squared_by_coupling(p, q)).abs());
    }
    assert!(worst < 1e-6, "{worst:e}");
}

#[test]
fn barycenter_matches_grid_search() {
    let mut r = rng(12);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let k = r.gen_range(1..=5);
        let raw: Vec<f64> = (0..k).map(|_| r.gen_range(0.05..1.0)).collect();
        let total: f64 = raw.iter().sum();
        let items: Vec<_> = raw.iter().map(|w| (w / total, g(r.gen_range(-5.0..5.0), r.gen_range(0.0..3.0)))).collect();
        let b = barycenter_gaussian(&items).unwrap();
        let (m, s) = barycenter_by_search(&items);
        worst = worst.max((b.mean - m).abs()).max((b.std - s).abs());
    }
    assert!(worst < 1e-3, "{worst:e}");
}

#[test]
fn examples() {
    assert_eq!(w2_gaussian(g(0.0, 1.0), g(3.0, 5.0)), 5.0);
    assert_eq!(w2_gaussian(g(2.0, 0.5), g(2.0, 0.5)), 0.0);
    let b = barycenter_gaussian(&[(0.5, g(0.0, 1.0)), (0.5, g(4.0, 3.0))]).unwrap();
    assert_eq!((b.mean, b.std), (2.0, 2.0));
    assert!((std_normal_quantile(0.95).unwrap() - 1.644_853_626_951_472_2).abs() < 1e-12);
    assert_eq!(upper_bound(g(1.0, 2.0), 0.5).unwrap(), 1.0);
    let s0 = prior_std(ValueBounds::from_rewards(0.0, 1.0, 0.99).unwrap());
    assert!((s0 - 100.0 / 12f64.sqrt()).abs() < 1e-9);
}

#[test]
fn bad_inputs_rejected() {
    assert!(GaussianPosterior::new(0.0, -1e-9).is_err());
    assert!(std_normal_quantile(0.0).is_err() && std_normal_quantile(1.0).is_err());
    assert!(barycenter_gaussian(&[]).is_err());
    assert!(barycenter_gaussian(&[(0.7, g(0.0, 1.0)), (0.7, g(1.0, 1.0))]).is_err());
    assert!(barycenter_gaussian(&[(1.5, g(0.0, 1.0)), (-0.5, g(1.0, 1.0))]).is_err());
}

fn posterior() -> impl Strategy<Value = GaussianPosterior> {
    (-50.0..50.0f64, 0.0..20.0f64).prop_map(|(m, s)| g(m, s))
}

proptest! {
    #[test]
    fn w2_is_a_metric(p in posterior(), q in posterior(), r in posterior()) {
        prop_assert_eq!(w2_gaussian(p, p), 0.0);
        prop_assert_eq!(w2_gaussian(p, q), w2_gaussian(q, p));
        prop_assert!(w2_gaussian(p, r) <= w2_gaussian(p, q) + w2_gaussian(q, r) + 1e-9);
        prop_assert!(w2_gaussian(p, q) >= 0.0);
    }

    #[test]
    fn barycenter_of_one_is_itself(p in posterior()) {
        prop_assert_eq!(barycenter_gaussian(&[(1.0, p)]).unwrap(), p);
    }

    #[test]
    fn barycenter_minimizes_weighted_cost(p in posterior(), q in posterior(), a in 0.0..=1.0f64, dm in -1.0..1.0f64, ds in -1.0..1.0f64) {
        let items = [(1.0 - a, p), (a, q)];
        let b = barycenter_gaussian(&items).unwrap();
        let other = weighted_cost(&items, b.mean + dm, (b.std + ds).max(0.0));
        prop_assert!(weighted_cost(&items, b.mean, b.std) <= other + 1e-9);
    }

    #[test]
    fn upper_bound_sign_follows_delta(p in posterior(), d in 0.001..0.999f64) {
        let u = upper_bound(p, d).unwrap();
        if d > 0.5 { prop_assert!(u >= p.mean) } else { prop_assert!(u <= p.mean) }
    }

    #[test]
    fn quantile_inverts_cdf(x in -8.0..2.0f64) {
        let back = std_normal_quantile(std_normal_cdf(x)).unwrap();
        prop_assert!((back - x).abs() < 1e-7 * (1.0 + x.abs()), "{} -> {}", x, back);
    }
}
