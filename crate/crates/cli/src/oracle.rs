//! Closed-form and tabular verification suite behind `wac oracle-check`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wac_core::gaussq::{
    barycenter_gaussian, prior_std, std_normal_cdf, std_normal_quantile, upper_bound, w2_squared, GaussianPosterior,
};
use wac_core::tabular::{
    bellman_residual, polynomial_lr, riverswim5, value_iteration, wql_run, wtd_update, DiscreteMdp, PosteriorTable,
    RIGHT,
};

/// One verification outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

/// W2² between two Gaussians as the quantile-coupling integral
/// `int_0^1 (F^-1(u) - G^-1(u))² du`, substituting `u = Phi(z)` and applying
/// Simpson's rule on `z in [-10, 10]` with `n` (even) panels.
pub fn w2_by_quantiles(p: GaussianPosterior, q: GaussianPosterior, n: usize) -> f64 {
    let (lo, hi) = (-10.0, 10.0);
    let h = (hi - lo) / n as f64;
    let f = |z: f64| {
        // mirror the upper half so levels near 1 keep their precision
        let level = if z <= 0.0 {
            std_normal_quantile(std_normal_cdf(z))
        } else {
            std_normal_quantile(std_normal_cdf(-z)).map(|v| -v)
        };
        let Ok(level) = level else { return 0.0 };
        let d = (p.mean - q.mean) + (p.std - q.std) * level;
        d * d * (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
    };
    let inner: f64 = (1..n).map(|k| if k % 2 == 1 { 4.0 } else { 2.0 } * f(lo + k as f64 * h)).sum();
    (f(lo) + f(hi) + inner) * h / 3.0
}

/// Minimizes `sum_i w_i W2²(x, p_i)` over a shrinking grid.
pub fn barycenter_by_search(items: &[(f64, GaussianPosterior)]) -> (f64, f64) {
    let f = |m: f64, s: f64| items.iter().map(|(w, p)| w * ((m - p.mean).powi(2) + (s - p.std).powi(2))).sum::<f64>();
    let n = items.len().max(1) as f64;
    let (mut m, mut s) =
        (items.iter().map(|(_, p)| p.mean).sum::<f64>() / n, items.iter().map(|(_, p)| p.std).sum::<f64>() / n);
    let spread = |g: fn(&GaussianPosterior) -> f64| {
        let (lo, hi) =
            items.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (_, p)| (lo.min(g(p)), hi.max(g(p))));
        hi - lo
    };
    let mut h = spread(|p| p.mean).max(spread(|p| p.std)).max(1.0);
    while h > 1e-7 {
        let mut best = (f(m, s), m, s);
        for i in -10..=10 {
            for j in -10..=10 {
                let (mm, ss) = (m + h * i as f64 / 10.0, (s + h * j as f64 / 10.0).max(0.0));
                let v = f(mm, ss);
                if v < best.0 {
                    best = (v, mm, ss);
                }
            }
        }
        (m, s) = (best.1, best.2);
        h /= 4.0;
    }
    (m, s)
}

/// Worst-case numbers of a WQL run on the 5-state Riverswim.
#[derive(Debug, Clone, PartialEq)]
pub struct WqlSummary {
    pub greedy_optimal: bool,
    pub sup_error: f64,
    /// Largest std over visited pairs, in units of the prior std.
    pub max_visited_std: f64,
    pub min_visits: u64,
}

pub fn wql_riverswim(mdp: &DiscreteMdp, episodes: usize, delta: f64, seed: u64) -> wac_core::Result<WqlSummary> {
    let q = value_iteration(mdp, 1e-12)?;
    let sigma0 = prior_std(mdp.value_bounds()?);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (table, _) = wql_run(mdp, episodes, delta, polynomial_lr, &mut rng)?;
    Ok(summarize(mdp, &table, &q, sigma0))
}

fn summarize(mdp: &DiscreteMdp, table: &PosteriorTable, q: &[Vec<f64>], sigma0: f64) -> WqlSummary {
    let mut out = WqlSummary { greedy_optimal: true, sup_error: 0.0, max_visited_std: 0.0, min_visits: u64::MAX };
    for s in 0..mdp.n_states {
        let best = (0..mdp.n_actions).map(|a| q[s][a]).fold(f64::NEG_INFINITY, f64::max);
        out.greedy_optimal &= q[s][table.greedy(s)] == best;
        for a in 0..mdp.n_actions {
            let p = table.get(s, a);
            out.sup_error = out.sup_error.max((p.mean - q[s][a]).abs());
            let n = table.visits(s, a);
            if n > 0 {
                out.max_visited_std = out.max_visited_std.max(p.std / sigma0);
                out.min_visits = out.min_visits.min(n);
            }
        }
    }
    out
}

/// Runs every check. All are fast enough to run on each invocation.
pub fn run_checks() -> Vec<Check> {
    let mut out = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let gauss =
        |rng: &mut ChaCha8Rng| GaussianPosterior { mean: rng.gen_range(-5.0..5.0), std: rng.gen_range(0.0..3.0) };

    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let (p, q) = (gauss(&mut rng), gauss(&mut rng));
        worst = worst.max((w2_squared(p, q) - w2_by_quantiles(p, q, 8000)).abs());
    }
    out.push(Check {
        name: "w2-closed-form-vs-quantile-integral",
        passed: worst < 1e-6,
        detail: format!("max abs err {worst:.2e}"),
    });

    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let (p, q, a) = (gauss(&mut rng), gauss(&mut rng), rng.gen_range(0.0..1.0));
        let b = barycenter_gaussian(&[(1.0 - a, p), (a, q)]).expect("valid weights");
        let (m, s) = barycenter_by_search(&[(1.0 - a, p), (a, q)]);
        worst = worst.max((b.mean - m).abs()).max((b.std - s).abs());
    }
    out.push(Check {
        name: "barycenter-vs-grid-search",
        passed: worst < 1e-3,
        detail: format!("max abs err {worst:.2e}"),
    });

    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let mut table = PosteriorTable::filled(2, 1, gauss(&mut rng));
        table.set(1, 0, gauss(&mut rng));
        let (r, g, a) = (rng.gen_range(-1.0..1.0), rng.gen_range(0.0..0.99), rng.gen_range(0.0..=1.0));
        let (p, next) = (table.get(0, 0), table.get(1, 0).affine(r, g));
        let got = wtd_update(&mut table, 0, 0, r, g, Some((1, 0)), a).expect("valid step");
        let (m, s) = barycenter_by_search(&[(1.0 - a, p), (a, next)]);
        worst = worst.max((got.mean - m).abs()).max((got.std - s).abs());
    }
    out.push(Check {
        name: "wtd-update-vs-grid-search",
        passed: worst < 1e-3,
        detail: format!("max abs err {worst:.2e}"),
    });

    let z = std_normal_quantile(0.975).unwrap_or(f64::NAN);
    let ub = upper_bound(GaussianPosterior { mean: 1.0, std: 2.0 }, 0.5).unwrap_or(f64::NAN);
    out.push(Check {
        name: "quantile-and-upper-bound",
        passed: (z - 1.959_963_984_540_054).abs() < 1e-9 && ub == 1.0,
        detail: format!("z(0.975) = {z:.12}, U(0.5) = {ub}"),
    });

    let geometric = DiscreteMdp {
        n_states: 1,
        n_actions: 1,
        transitions: vec![vec![vec![1.0]]],
        rewards: vec![vec![1.0]],
        gamma: 0.9,
        terminal: vec![false],
        initial: vec![1.0],
        horizon: 10,
    };
    let q = value_iteration(&geometric, 1e-12).map(|q| q[0][0]).unwrap_or(f64::NAN);
    out.push(Check {
        name: "value-iteration-geometric",
        passed: (q - 10.0).abs() < 1e-9,
        detail: format!("Q* = {q:.12}"),
    });

    let mdp = riverswim5();
    match value_iteration(&mdp, 1e-12) {
        Ok(q) => {
            let res = bellman_residual(&mdp, &q);
            let right = (0..mdp.n_states).all(|s| q[s][RIGHT] > q[s][1 - RIGHT]);
            out.push(Check {
                name: "riverswim5-optimal-policy",
                passed: right && res < 1e-10,
                detail: format!("always right {right}, residual {res:.1e}"),
            });
        }
        Err(e) => out.push(Check { name: "riverswim5-optimal-policy", passed: false, detail: e.to_string() }),
    }

    match wql_riverswim(&mdp, 5000, 0.95, 0) {
        Ok(w) => out.push(Check {
            name: "wql-riverswim5",
            passed: w.greedy_optimal && w.sup_error <= 0.1 && w.max_visited_std <= 0.05,
            detail: format!(
                "greedy optimal {}, sup err {:.3}, max visited std {:.3} sigma0 (fewest visits {})",
                w.greedy_optimal, w.sup_error, w.max_visited_std, w.min_visits
            ),
        }),
        Err(e) => out.push(Check { name: "wql-riverswim5", passed: false, detail: e.to_string() }),
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_search_finds_interior_minimum() {
        let p = GaussianPosterior { mean: 0.0, std: 1.0 };
        let q = GaussianPosterior { mean: 4.0, std: 3.0 };
        let (m, s) = barycenter_by_search(&[(0.75, p), (0.25, q)]);
        assert!((m - 1.0).abs() < 1e-6 && (s - 1.5).abs() < 1e-6, "{m} {s}");
    }
}
