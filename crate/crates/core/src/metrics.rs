//! Coverage of the normalized state-action cube, per-epoch run logs and
//! σ-landscape probes.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::diff::Tensor;
use crate::error::{invalid, Error, Result};

pub const DEFAULT_EPSILON: f64 = 1e-4;

/// Bins per dimension: 50 for 2-D inputs, 8 otherwise.
pub fn default_bins(dim: usize) -> usize {
    if dim <= 2 {
        50
    } else {
        8
    }
}

/// Dense visit histogram over `[-1, 1]^dim`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageGrid {
    dim: usize,
    bins_per_dim: usize,
    counts: Vec<u64>,
    total_steps: u64,
}

impl CoverageGrid {
    pub fn new(dim: usize, bins_per_dim: usize) -> Result<Self> {
        if dim == 0 || bins_per_dim == 0 {
            return Err(invalid("coverage grid needs positive dimension and bins"));
        }
        let cells = (bins_per_dim as u64)
            .checked_pow(dim as u32)
            .filter(|&c| c <= 1 << 26)
            .ok_or_else(|| invalid(format!("{bins_per_dim}^{dim} cells is too many")))?;
        Ok(Self { dim, bins_per_dim, counts: vec![0; cells as usize], total_steps: 0 })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn bins_per_dim(&self) -> usize {
        self.bins_per_dim
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total_steps(&self) -> u64 {
        self.total_steps
    }

    pub fn n_cells(&self) -> usize {
        self.counts.len()
    }

    fn bin(&self, v: f64) -> usize {
        let b = self.bins_per_dim;
        let i = ((v + 1.0) * 0.5 * b as f64).floor();
        if i < 0.0 {
            0
        } else {
            (i as usize).min(b - 1)
        }
    }

    /// Row-major cell index; the first coordinate varies slowest.
    pub fn cell_index(&self, point: &[f64]) -> usize {
        point.iter().fold(0, |acc, &v| acc * self.bins_per_dim + self.bin(v))
    }

    /// Center of cell `index` in normalized coordinates.
    pub fn cell_center(&self, mut index: usize) -> Vec<f64> {
        let b = self.bins_per_dim;
        let mut out = vec![0.0; self.dim];
        for d in (0..self.dim).rev() {
            let i = index % b;
            index /= b;
            out[d] = -1.0 + (2.0 * i as f64 + 1.0) / b as f64;
        }
        out
    }

    /// Counts one visit; out-of-cube coordinates are clipped with a warning.
    pub fn record_visit(&mut self, point: &[f64]) -> Result<()> {
        if point.len() != self.dim {
            return Err(Error::Shape {
                context: "coverage point".into(),
                expected: vec![self.dim],
                actual: vec![point.len()],
            });
        }
        if point.iter().any(|v| !(-1.0..=1.0).contains(v)) {
            log::warn!("coverage point {point:?} outside [-1, 1], clipping");
        }
        let idx = self.cell_index(point);
        self.counts[idx] += 1;
        self.total_steps += 1;
        Ok(())
    }

    /// Fraction of cells whose visit frequency exceeds `epsilon`.
    pub fn coverage(&self, epsilon: f64) -> f64 {
        self.coverage_with_denominator(epsilon, self.total_steps)
    }

    /// Coverage with frequencies taken as `count / denominator`. For a fixed
    /// denominator this can only grow as visits accumulate.
    pub fn coverage_with_denominator(&self, epsilon: f64, denominator: u64) -> f64 {
        if denominator == 0 {
            return 0.0;
        }
        let total = denominator as f64;
        let hit = self.counts.iter().filter(|&&c| c as f64 / total > epsilon).count();
        hit as f64 / self.counts.len() as f64
    }

    pub fn count_at(&self, point: &[f64]) -> u64 {
        self.counts[self.cell_index(point)]
    }
}

/// Regular 2-D probe grid at cell centers, varying coordinates `axes` of a
/// `dim`-dimensional point and holding the rest at `fixed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeGrid {
    pub dim: usize,
    pub axes: (usize, usize),
    pub bins: usize,
    pub fixed: Vec<f64>,
}

impl ProbeGrid {
    pub fn plane(dim: usize, bins: usize) -> Self {
        Self { dim, axes: (0, 1.min(dim - 1)), bins, fixed: vec![0.0; dim] }
    }

    /// `[bins², dim]`, row `i * bins + j` holding axis-0 bin `i` and axis-1 bin `j`.
    pub fn points(&self) -> Tensor {
        let b = self.bins;
        let c = |i: usize| -1.0 + (2.0 * i as f64 + 1.0) / b as f64;
        let mut data = Vec::with_capacity(b * b * self.dim);
        for i in 0..b {
            for j in 0..b {
                let mut p = self.fixed.clone();
                p[self.axes.0] = c(i);
                p[self.axes.1] = c(j);
                data.extend(p);
            }
        }
        Tensor::matrix(b * b, self.dim, data).expect("probe shape")
    }
}

/// σ evaluated on a probe grid, row-major `bins x bins`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SigmaMap {
    pub grid: ProbeGrid,
    pub values: Vec<f64>,
}

/// Evaluates `sigma` (min over critics) on every probe point.
pub fn sigma_probe(grid: &ProbeGrid, sigma: impl Fn(&Tensor) -> Result<Vec<f64>>) -> Result<SigmaMap> {
    let values = sigma(&grid.points())?;
    Ok(SigmaMap { grid: grid.clone(), values })
}

impl SigmaMap {
    pub fn to_csv(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "i,j,x,y,sigma")?;
        let b = self.grid.bins;
        let c = |i: usize| -1.0 + (2.0 * i as f64 + 1.0) / b as f64;
        for i in 0..b {
            for j in 0..b {
                writeln!(w, "{i},{j},{},{},{}", c(i), c(j), self.values[i * b + j])?;
            }
        }
        Ok(())
    }
}

fn ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut r = vec![0.0; x.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && x[idx[j + 1]] == x[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for k in i..=j {
            r[idx[k]] = avg;
        }
        i = j + 1;
    }
    r
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return f64::NAN;
    }
    sxy / (sxx * syy).sqrt()
}

/// Spearman rank correlation with average ranks for ties; NaN when either
/// input is constant.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(invalid("spearman needs two equal-length samples of size >= 2"));
    }
    Ok(pearson(&ranks(x), &ranks(y)))
}

/// Mean and half-width of the normal-approximation 95% interval.
pub fn mean_ci95(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, 1.96 * var.sqrt() / (n as f64).sqrt())
}

/// One row of a run log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub return_mean: f64,
    pub return_ci95: f64,
    pub episodes_completed: usize,
    pub coverage: f64,
    pub alpha: f64,
    pub sigma_visited_mean: f64,
    pub sigma_synthetic_mean: f64,
    pub critic_loss: f64,
    pub actor_loss: f64,
}

pub const CSV_COLUMNS: [&str; 10] = [
    "epoch",
    "return_mean",
    "return_ci95",
    "episodes_completed",
    "coverage",
    "alpha",
    "sigma_visited_mean",
    "sigma_synthetic_mean",
    "critic_loss",
    "actor_loss",
];

/// Per-epoch records with strictly increasing epoch indices.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunLog {
    records: Vec<EpochMetrics>,
}

impl RunLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, m: EpochMetrics) -> Result<()> {
        if let Some(last) = self.records.last() {
            if m.epoch <= last.epoch {
                return Err(invalid(format!("epoch {} does not follow {}", m.epoch, last.epoch)));
            }
        }
        self.records.push(m);
        Ok(())
    }

    pub fn records(&self) -> &[EpochMetrics] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn write_csv(&self, w: impl Write) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let e = |err: csv::Error| Error::Io(std::io::Error::other(err));
        for r in &self.records {
            out.serialize(r).map_err(e)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_csv(r: impl std::io::Read) -> Result<Self> {
        let mut log = RunLog::new();
        for (i, row) in csv::Reader::from_reader(r).deserialize().enumerate() {
            let m: EpochMetrics = row.map_err(|err| invalid(format!("metrics row {}: {err}", i + 1)))?;
            log.push(m)?;
        }
        Ok(log)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn single_visit() {
        let mut g = CoverageGrid::new(2, 50).unwrap();
        g.record_visit(&[0.1, -0.3]).unwrap();
        assert_eq!(g.total_steps(), 1);
        assert_eq!(g.count_at(&[0.1, -0.3]), 1);
        assert_eq!(g.counts().iter().sum::<u64>(), 1);
        assert_eq!(g.coverage(1e-4), 1.0 / 2500.0);
        assert_eq!(g.coverage(1.0), 0.0);
    }

    #[test]
    fn upper_boundary_maps_to_last_cell() {
        let g = CoverageGrid::new(3, 8).unwrap();
        assert_eq!(g.cell_index(&[1.0, 1.0, 1.0]), g.n_cells() - 1);
        assert_eq!(g.cell_index(&[-1.0, -1.0, -1.0]), 0);
        let mut g = g;
        g.record_visit(&[1.5, 0.0, -2.0]).unwrap();
        assert_eq!(g.total_steps(), 1);
    }

    #[test]
    fn uniform_fill() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut g = CoverageGrid::new(2, 50).unwrap();
        for _ in 0..1_000_000 {
            g.record_visit(&[rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]).unwrap();
        }
        let sd = (1e6_f64 * (1.0 / 2500.0) * (1.0 - 1.0 / 2500.0)).sqrt();
        assert!(g.counts().iter().all(|&c| (c as f64 - 400.0).abs() < 5.0 * sd));
        assert_eq!(g.coverage(DEFAULT_EPSILON), 1.0);
    }

    #[test]
    fn centers_round_trip() {
        let g = CoverageGrid::new(2, 5).unwrap();
        for i in 0..g.n_cells() {
            assert_eq!(g.cell_index(&g.cell_center(i)), i);
        }
    }

    #[test]
    fn probe_grid_matches_cell_layout() {
        let g = CoverageGrid::new(2, 50).unwrap();
        let p = ProbeGrid::plane(2, 50).points();
        for r in [0, 7, 1234, 2499] {
            assert_eq!(g.cell_index(p.row(r)), r);
        }
    }

    #[test]
    fn spearman_cases() {
        assert!((spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 35.0]).unwrap() - 1.0).abs() < 1e-12);
        assert!((spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap() + 1.0).abs() < 1e-12);
        // ties: ranks (1.5, 1.5, 3) vs (1, 2, 3)
        let r = spearman(&[0.0, 0.0, 1.0], &[1.0, 2.0, 3.0]).unwrap();
        assert!((r - 0.866_025_403_784_438_6).abs() < 1e-12);
        assert!(spearman(&[1.0, 1.0], &[1.0, 2.0]).unwrap().is_nan());
    }

    #[test]
    fn ci_formula() {
        let (m, h) = mean_ci95(&[1.0, 2.0, 3.0, 4.0, 5.0]);
        assert_eq!(m, 3.0);
        assert!((h - 1.96 * 2.5f64.sqrt() / 5f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn csv_round_trip() {
        let mut log = RunLog::new();
        for e in 1..=3 {
            log.push(EpochMetrics {
                epoch: e,
                return_mean: -1.5 * e as f64,
                return_ci95: 0.1,
                episodes_completed: e,
                coverage: 0.25,
                alpha: 0.3,
                sigma_visited_mean: 1.0 / 3.0,
                sigma_synthetic_mean: f64::NAN,
                critic_loss: 2.0,
                actor_loss: -1.0,
            })
            .unwrap();
        }
        let mut buf = Vec::new();
        log.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text.lines().next().unwrap(), CSV_COLUMNS.join(","));
        let back = RunLog::read_csv(&buf[..]).unwrap();
        assert_eq!(back.len(), 3);
        assert_eq!(back.records()[0].sigma_visited_mean, 1.0 / 3.0);
        assert!(back.records()[2].sigma_synthetic_mean.is_nan());
        assert!(log.clone().push(back.records()[0].clone()).is_err());
    }
}
