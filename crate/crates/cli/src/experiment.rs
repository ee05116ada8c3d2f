//! Seeded runs, merging across seeds and parameter sweeps.
//!
//! Layout of an experiment directory:
//!
//! ```text
//! <output>/manifest.json       resolved config, code version, per-seed status
//! <output>/merged.csv          per-epoch mean and 95% CI over seeds
//! <output>/seed-<n>/metrics.csv
//! <output>/seed-<n>/summary.json
//! <output>/seed-<n>/sigma_probe.csv, sigma_probe.svg   (WAC only)
//! <output>/seed-<n>/checkpoint.json
//! ```

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use wac_core::agents::Trainer;
use wac_core::envs::EnvConfig;
use wac_core::metrics::{mean_ci95, sigma_probe, spearman, EpochMetrics, ProbeGrid, RunLog, SigmaMap};

use crate::config::{ExperimentConfig, SweepSpec};
use crate::error::{HarnessError, Result};
use crate::plot::{self, Series};

pub const MANIFEST_VERSION: u32 = 1;
pub const CODE_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Columns of `merged.csv` after `epoch` and `seeds`; each appears as
/// `<name>_mean` and `<name>_ci95`.
pub const MERGED_METRICS: [&str; 8] = [
    "return_mean",
    "episodes_completed",
    "coverage",
    "alpha",
    "sigma_visited_mean",
    "sigma_synthetic_mean",
    "critic_loss",
    "actor_loss",
];

/// Number of trailing epochs averaged into `final_return`.
pub const FINAL_WINDOW: usize = 10;

fn metric(m: &EpochMetrics, name: &str) -> f64 {
    match name {
        "return_mean" => m.return_mean,
        "episodes_completed" => m.episodes_completed as f64,
        "coverage" => m.coverage,
        "alpha" => m.alpha,
        "sigma_visited_mean" => m.sigma_visited_mean,
        "sigma_synthetic_mean" => m.sigma_synthetic_mean,
        "critic_loss" => m.critic_loss,
        "actor_loss" => m.actor_loss,
        _ => unreachable!("unknown metric {name}"),
    }
}

/// End-of-run numbers for one seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedSummary {
    pub seed: u64,
    pub epochs: usize,
    #[serde(deserialize_with = "nullable")]
    pub sigma0: f64,
    /// Mean `return_mean` over the last [`FINAL_WINDOW`] epochs.
    #[serde(deserialize_with = "nullable")]
    pub final_return: f64,
    /// Coverage averaged over all epochs.
    #[serde(deserialize_with = "nullable")]
    pub average_coverage: f64,
    pub final_episodes_completed: usize,
    pub first_completion_epoch: Option<usize>,
    /// Rank correlation of the σ probe with visit counts (2-D inputs only).
    pub sigma_count_spearman: Option<f64>,
    #[serde(deserialize_with = "nullable")]
    pub final_sigma_synthetic: f64,
}

/// JSON writes non-finite floats as `null`; read them back as NaN.
fn nullable<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
}

/// Status of one seed in the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedRecord {
    pub seed: u64,
    pub status: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub summary: Option<SeedSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub code_version: String,
    pub config: ExperimentConfig,
    pub env_config: EnvConfig,
    pub seeds: Vec<SeedRecord>,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| HarnessError::Run(format!("{}: {e}", path.display())))
    }
}

/// Everything a finished experiment produced.
#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub dir: PathBuf,
    pub manifest: Manifest,
    pub logs: Vec<(u64, RunLog)>,
}

impl ExperimentReport {
    pub fn failures(&self) -> Vec<&SeedRecord> {
        self.manifest.seeds.iter().filter(|s| s.error.is_some()).collect()
    }

    pub fn summaries(&self) -> Vec<&SeedSummary> {
        self.manifest.seeds.iter().filter_map(|s| s.summary.as_ref()).collect()
    }
}

fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| HarnessError::io(path, e))
}

/// σ on the first two normalized coordinates, others held at 0, and its
/// rank correlation with visit counts when the grid is the coverage grid.
pub fn probe_trainer(trainer: &Trainer, bins: Option<usize>) -> Result<Option<(SigmaMap, Option<f64>)>> {
    let agent = trainer.agent();
    if agent.distributional_critics().is_none() {
        return Ok(None);
    }
    let grid = trainer.grid();
    let dim = grid.dim();
    let bins = bins.unwrap_or(if dim == 2 { grid.bins_per_dim() } else { 50 });
    let probe = ProbeGrid::plane(dim, bins);
    let map = sigma_probe(&probe, |x| Ok(agent.sigma_at(x)?.expect("distributional agent")))?;
    let rho = if dim == 2 && bins == grid.bins_per_dim() {
        let counts: Vec<f64> = grid.counts().iter().map(|&c| c as f64).collect();
        let r = spearman(&map.values, &counts)?;
        r.is_finite().then_some(r)
    } else {
        None
    };
    Ok(Some((map, rho)))
}

/// Trains one seed, writing its artifacts into `dir`. The metrics CSV is
/// written even when training fails part-way.
pub fn run_seed(config: &ExperimentConfig, env: &EnvConfig, seed: u64, dir: &Path) -> (RunLog, Result<SeedSummary>) {
    let mut log = RunLog::new();
    let result = (|| {
        std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
        let mut trainer = Trainer::new(env.clone(), config.agent.clone(), config.train.clone(), seed)?;
        for _ in 0..config.epochs {
            let m = trainer.train_epoch()?;
            log::debug!("seed {seed} epoch {} return {:.3} coverage {:.3}", m.epoch, m.return_mean, m.coverage);
            log.push(m)?;
        }
        Ok(trainer)
    })();
    let mut csv = Vec::new();
    let written =
        log.write_csv(&mut csv).map_err(HarnessError::from).and_then(|_| write_file(&dir.join("metrics.csv"), &csv));
    let trainer = match (result, written) {
        (Ok(t), Ok(())) => t,
        (Err(e), _) | (Ok(_), Err(e)) => return (log, Err(e)),
    };
    let summary = (|| {
        let sigma0 = trainer.agent().sigma0();
        let mut rho = None;
        if let Some((map, r)) = probe_trainer(&trainer, None)? {
            rho = r;
            let mut buf = Vec::new();
            map.to_csv(&mut buf)?;
            write_file(&dir.join("sigma_probe.csv"), &buf)?;
            let title = format!("sigma, seed {seed}, epoch {}", trainer.epoch());
            write_file(&dir.join("sigma_probe.svg"), plot::heatmap_svg(&title, map.grid.bins, &map.values, sigma0))?;
        }
        if config.checkpoint {
            trainer.checkpoint().save(&dir.join("checkpoint.json"))?;
        }
        let recs = log.records();
        let tail = &recs[recs.len().saturating_sub(FINAL_WINDOW)..];
        let last = recs.last().expect("at least one epoch");
        let summary = SeedSummary {
            seed,
            epochs: recs.len(),
            sigma0,
            final_return: tail.iter().map(|m| m.return_mean).sum::<f64>() / tail.len() as f64,
            average_coverage: recs.iter().map(|m| m.coverage).sum::<f64>() / recs.len() as f64,
            final_episodes_completed: last.episodes_completed,
            first_completion_epoch: recs.iter().find(|m| m.episodes_completed > 0).map(|m| m.epoch),
            sigma_count_spearman: rho,
            final_sigma_synthetic: last.sigma_synthetic_mean,
        };
        write_file(&dir.join("summary.json"), serde_json::to_string_pretty(&summary).expect("summary serializes"))?;
        Ok(summary)
    })();
    (log, summary)
}

/// `(epoch, seeds, (mean, ci95) per merged metric)`.
pub type MergedRow = (usize, usize, Vec<(f64, f64)>);

/// Per-epoch mean and 95% CI over the seeds that reached that epoch.
/// Non-finite values are left out of each cell.
pub fn merge_logs(logs: &[&RunLog]) -> Vec<MergedRow> {
    let epochs = logs.iter().map(|l| l.len()).max().unwrap_or(0);
    (0..epochs)
        .map(|e| {
            let rows: Vec<&EpochMetrics> = logs.iter().filter_map(|l| l.records().get(e)).collect();
            let cells = MERGED_METRICS
                .iter()
                .map(|name| {
                    let vals: Vec<f64> = rows.iter().map(|m| metric(m, name)).filter(|v| v.is_finite()).collect();
                    mean_ci95(&vals)
                })
                .collect();
            (rows[0].epoch, rows.len(), cells)
        })
        .collect()
}

pub fn write_merged_csv(logs: &[&RunLog], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| HarnessError::Run(format!("{}: {e}", path.display())))?;
    let mut header = vec!["epoch".to_string(), "seeds".to_string()];
    for m in MERGED_METRICS {
        header.push(format!("{m}_mean"));
        header.push(format!("{m}_ci95"));
    }
    let csv_err = |e: csv::Error| HarnessError::Run(format!("{}: {e}", path.display()));
    w.write_record(&header).map_err(csv_err)?;
    for (epoch, n, cells) in merge_logs(logs) {
        let mut rec = vec![epoch.to_string(), n.to_string()];
        for (mean, ci) in cells {
            rec.push(mean.to_string());
            rec.push(ci.to_string());
        }
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))
}

/// Runs every seed of `config` on up to `jobs` threads. Seeds are
/// independent, so the artifacts do not depend on `jobs`.
///
/// Returns `Ok` with failures recorded in the manifest when some seeds
/// fail; the caller decides the exit status.
pub fn run_experiment(config: &ExperimentConfig, jobs: usize) -> Result<ExperimentReport> {
    config.validate()?;
    let env = config.env_config()?;
    let dir = config.output_dir();
    std::fs::create_dir_all(&dir).map_err(|e| HarnessError::io(&dir, e))?;
    log::info!("{} seeds of {} on {} -> {}", config.seeds.len(), config.algorithm, config.env, dir.display());

    let next = AtomicUsize::new(0);
    type Slot = Option<(RunLog, Result<SeedSummary>)>;
    let results: Mutex<Vec<Slot>> = Mutex::new((0..config.seeds.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..jobs.clamp(1, config.seeds.len()) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(&seed) = config.seeds.get(i) else { break };
                let out = run_seed(config, &env, seed, &dir.join(format!("seed-{seed}")));
                if let Err(e) = &out.1 {
                    log::error!("seed {seed}: {e}");
                }
                results.lock().expect("no poisoned workers")[i] = Some(out);
            });
        }
    });

    let mut logs = Vec::new();
    let mut records = Vec::new();
    for (seed, slot) in config.seeds.iter().zip(results.into_inner().expect("workers joined")) {
        let (log, res) = slot.expect("every seed ran");
        let record = match res {
            Ok(summary) => SeedRecord { seed: *seed, status: "ok".into(), error: None, summary: Some(summary) },
            Err(e) => SeedRecord { seed: *seed, status: "failed".into(), error: Some(e.to_string()), summary: None },
        };
        if record.error.is_none() {
            logs.push((*seed, log));
        }
        records.push(record);
    }

    let ok: Vec<&RunLog> = logs.iter().map(|(_, l)| l).collect();
    if !ok.is_empty() {
        write_merged_csv(&ok, &dir.join("merged.csv"))?;
    }
    let manifest = Manifest {
        format_version: MANIFEST_VERSION,
        code_version: CODE_VERSION.into(),
        config: config.clone(),
        env_config: env,
        seeds: records,
    };
    write_file(&dir.join("manifest.json"), serde_json::to_string_pretty(&manifest).expect("manifest serializes"))?;
    Ok(ExperimentReport { dir, manifest, logs })
}

/// Repeats the experiment recorded in `manifest` with artifacts under
/// `output`. The recorded environment must still resolve from the config.
pub fn rerun(manifest: &Manifest, output: &Path, jobs: usize) -> Result<ExperimentReport> {
    if manifest.format_version != MANIFEST_VERSION {
        return Err(HarnessError::Config(format!(
            "manifest format {} is not {MANIFEST_VERSION}",
            manifest.format_version
        )));
    }
    if manifest.code_version != CODE_VERSION {
        log::warn!("manifest written by version {}, running {CODE_VERSION}", manifest.code_version);
    }
    let mut config = manifest.config.clone();
    if config.env_config()? != manifest.env_config {
        return Err(HarnessError::Config("manifest environment differs from the one its config resolves to".into()));
    }
    config.output = Some(output.to_path_buf());
    run_experiment(&config, jobs)
}

/// One row of `sweep.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub label: String,
    pub values: Vec<(String, String)>,
    pub seeds_ok: usize,
    pub coverage: (f64, f64),
    pub final_return: (f64, f64),
    pub final_sigma_synthetic: (f64, f64),
}

#[derive(Debug, Clone)]
pub struct SweepReport {
    pub dir: PathBuf,
    pub rows: Vec<SweepRow>,
    pub reports: Vec<ExperimentReport>,
}

impl SweepReport {
    pub fn failed(&self) -> bool {
        self.reports.iter().any(|r| !r.failures().is_empty())
    }
}

/// Runs every grid point as an experiment under `<base output>/<label>`,
/// then writes `sweep.csv` (one row per point, seed-averaged) and
/// comparison plots of the merged curves.
pub fn run_sweep(spec: &SweepSpec, jobs: usize) -> Result<SweepReport> {
    let points = spec.points()?;
    let dir = spec.base.output_dir();
    log::info!("sweep of {} grid points x {} seeds", points.len(), spec.base.seeds.len());
    let mut reports = Vec::with_capacity(points.len());
    let mut rows = Vec::with_capacity(points.len());
    for p in &points {
        log::info!("grid point {}", p.label);
        let report = run_experiment(&p.config, jobs)?;
        let sums = report.summaries();
        let stat = |f: &dyn Fn(&SeedSummary) -> f64| {
            let v: Vec<f64> = sums.iter().map(|s| f(s)).filter(|v| v.is_finite()).collect();
            mean_ci95(&v)
        };
        rows.push(SweepRow {
            label: p.label.clone(),
            values: p.values.clone(),
            seeds_ok: sums.len(),
            coverage: stat(&|s| s.average_coverage),
            final_return: stat(&|s| s.final_return),
            final_sigma_synthetic: stat(&|s| s.final_sigma_synthetic),
        });
        reports.push(report);
    }

    std::fs::create_dir_all(&dir).map_err(|e| HarnessError::io(&dir, e))?;
    let path = dir.join("sweep.csv");
    let mut w = csv::Writer::from_path(&path).map_err(|e| HarnessError::Run(format!("{}: {e}", path.display())))?;
    let csv_err = |e: csv::Error| HarnessError::Run(format!("{}: {e}", path.display()));
    let mut header: Vec<String> = vec!["point".into()];
    header.extend(spec.grid.keys().cloned());
    header.extend(
        [
            "seeds",
            "coverage_mean",
            "coverage_ci95",
            "final_return_mean",
            "final_return_ci95",
            "final_sigma_synthetic_mean",
            "final_sigma_synthetic_ci95",
        ]
        .map(String::from),
    );
    w.write_record(&header).map_err(csv_err)?;
    for r in &rows {
        let mut rec = vec![r.label.clone()];
        rec.extend(r.values.iter().map(|(_, v)| v.clone()));
        rec.push(r.seeds_ok.to_string());
        for (m, c) in [r.coverage, r.final_return, r.final_sigma_synthetic] {
            rec.push(m.to_string());
            rec.push(c.to_string());
        }
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush().map_err(|e| HarnessError::io(&path, e))?;

    let plots = dir.join("plots");
    std::fs::create_dir_all(&plots).map_err(|e| HarnessError::io(&plots, e))?;
    for (i, name) in MERGED_METRICS.iter().enumerate() {
        let series: Vec<Series> = reports
            .iter()
            .zip(&rows)
            .filter(|(rep, _)| !rep.logs.is_empty())
            .map(|(rep, row)| {
                let logs: Vec<&RunLog> = rep.logs.iter().map(|(_, l)| l).collect();
                let merged = merge_logs(&logs);
                Series {
                    label: row.label.clone(),
                    x: merged.iter().map(|(e, _, _)| *e as f64).collect(),
                    mean: merged.iter().map(|(_, _, c)| c[i].0).collect(),
                    ci: merged.iter().map(|(_, _, c)| c[i].1).collect(),
                }
            })
            .filter(|s| s.mean.iter().any(|v| v.is_finite()))
            .collect();
        if series.is_empty() {
            log::warn!("metric `{name}` has no finite values, plot omitted");
            continue;
        }
        let p = plots.join(format!("{name}.svg"));
        write_file(&p, plot::line_plot_svg(name, "epoch", name, &series))?;
    }
    Ok(SweepReport { dir, rows, reports })
}
