use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use wac_cli::experiment::probe_trainer;
use wac_cli::{oracle, plot, ExperimentConfig, HarnessError, Result, SweepSpec};
use wac_core::agents::{Algorithm, Checkpoint, Trainer};

#[derive(Parser)]
#[command(name = "wac", version, about = "Wasserstein actor-critic experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train every seed of one experiment.
    Run(RunArgs),
    /// Run a grid of experiments.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// `key=value` applied to the base config before expansion.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        sets: Vec<String>,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Render merged CSVs and σ dumps as SVG.
    Plot {
        /// Merged CSV files or experiment directories; `label=path` sets the legend entry.
        #[arg(long = "input", required_unless_present = "heatmap")]
        inputs: Vec<String>,
        #[arg(long)]
        heatmap: Option<PathBuf>,
        /// Colorbar maximum for `--heatmap`.
        #[arg(long)]
        sigma0: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Dump σ over a plane of the normalized input cube from a checkpoint.
    ProbeSigma {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 50)]
        bins: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Repeat a finished experiment from its manifest.
    Rerun {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Run the closed-form and tabular verification suite.
    OracleCheck,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    env: Option<String>,
    #[arg(long = "algo")]
    algorithm: Option<String>,
    #[arg(long)]
    epochs: Option<usize>,
    /// Comma-separated seeds.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    /// Any other field as `key=value` (dotted path or alias).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

fn apply_sets(cfg: &mut ExperimentConfig, sets: &[String]) -> Result<()> {
    for s in sets {
        let (k, v) = s.split_once('=').ok_or_else(|| HarnessError::Config(format!("`{s}` is not key=value")))?;
        cfg.set(k.trim(), v.trim())?;
    }
    Ok(())
}

fn experiment_config(a: &RunArgs) -> Result<ExperimentConfig> {
    let mut cfg = match (&a.config, &a.env) {
        (Some(path), _) => ExperimentConfig::load(path)?,
        (None, Some(env)) => ExperimentConfig::new(env, Algorithm::OeWac),
        (None, None) => return Err(HarnessError::Config("give --config or --env".into())),
    };
    if let (Some(_), Some(env)) = (&a.config, &a.env) {
        cfg.env = env.clone();
    }
    if let Some(alg) = &a.algorithm {
        cfg.set("algorithm", &format!("\"{alg}\""))?;
    }
    if let Some(e) = a.epochs {
        cfg.epochs = e;
    }
    if let Some(s) = &a.seeds {
        cfg.seeds = s.clone();
    }
    if let Some(o) = &a.output {
        cfg.output = Some(o.clone());
    }
    for (k, v) in [("lambda", a.lambda), ("rho", a.rho), ("delta", a.delta)] {
        if let Some(v) = v {
            cfg.set(k, &v.to_string())?;
        }
    }
    apply_sets(&mut cfg, &a.sets)?;
    Ok(cfg)
}

fn plot_inputs(inputs: &[String]) -> Vec<(String, PathBuf)> {
    inputs
        .iter()
        .map(|s| {
            let (label, path) = match s.split_once('=') {
                Some((l, p)) => (Some(l.to_string()), PathBuf::from(p)),
                None => (None, PathBuf::from(s)),
            };
            let path = if path.is_dir() { path.join("merged.csv") } else { path };
            let label = label.unwrap_or_else(|| {
                let stem = if path.file_name().is_some_and(|f| f == "merged.csv") {
                    path.parent()
                } else {
                    Some(path.as_path())
                };
                stem.and_then(|p| p.file_name()).map(|f| f.to_string_lossy().into_owned()).unwrap_or_else(|| s.clone())
            });
            (label, path)
        })
        .collect()
}

fn execute(cmd: Command) -> Result<bool> {
    match cmd {
        Command::Run(a) => {
            let cfg = experiment_config(&a)?;
            cfg.validate()?;
            let report = wac_cli::run_experiment(&cfg, a.jobs)?;
            for s in report.summaries() {
                println!(
                    "seed {}: final return {:.3}, average coverage {:.4}, episodes completed {}",
                    s.seed, s.final_return, s.average_coverage, s.final_episodes_completed
                );
            }
            let failures = report.failures();
            for f in &failures {
                eprintln!("seed {} failed: {}", f.seed, f.error.as_deref().unwrap_or(""));
            }
            println!("artifacts in {}", report.dir.display());
            Ok(failures.is_empty())
        }
        Command::Sweep { config, sets, jobs } => {
            let mut spec = SweepSpec::load(&config)?;
            apply_sets(&mut spec.base, &sets)?;
            let points = spec.points()?;
            println!(
                "{} grid points x {} seeds = {} runs",
                points.len(),
                spec.base.seeds.len(),
                points.len() * spec.base.seeds.len()
            );
            let report = wac_cli::run_sweep(&spec, jobs)?;
            for r in &report.rows {
                println!(
                    "{}: coverage {:.4} ± {:.4}, final return {:.3} ± {:.3}",
                    r.label, r.coverage.0, r.coverage.1, r.final_return.0, r.final_return.1
                );
            }
            println!("summary in {}", report.dir.join("sweep.csv").display());
            Ok(!report.failed())
        }
        Command::Plot { inputs, heatmap, sigma0, out } => {
            if !inputs.is_empty() {
                let report = plot::emit_plots(&plot_inputs(&inputs), &out)?;
                for w in &report.warnings {
                    eprintln!("warning: {w}");
                }
                for p in &report.written {
                    println!("{}", p.display());
                }
            }
            if let Some(path) = heatmap {
                let sigma0 = sigma0.ok_or_else(|| HarnessError::Config("--heatmap needs --sigma0".into()))?;
                let (bins, values) = plot::read_sigma_dump(&path)?;
                std::fs::create_dir_all(&out).map_err(|e| HarnessError::Run(e.to_string()))?;
                let target = out.join("sigma_heatmap.svg");
                std::fs::write(&target, plot::heatmap_svg("sigma", bins, &values, sigma0))
                    .map_err(|e| HarnessError::Run(e.to_string()))?;
                println!("{}", target.display());
            }
            Ok(true)
        }
        Command::ProbeSigma { checkpoint, bins, out } => {
            let ck = Checkpoint::load(&checkpoint)?;
            let trainer = Trainer::restore(&ck)?;
            let Some((map, rho)) = probe_trainer(&trainer, Some(bins))? else {
                return Err(HarnessError::Config(format!(
                    "{} is not a distributional agent",
                    trainer.agent().algorithm()
                )));
            };
            std::fs::create_dir_all(&out).map_err(|e| HarnessError::Run(e.to_string()))?;
            let mut buf = Vec::new();
            map.to_csv(&mut buf)?;
            std::fs::write(out.join("sigma_probe.csv"), buf).map_err(|e| HarnessError::Run(e.to_string()))?;
            let svg = plot::heatmap_svg(
                &format!("sigma, epoch {}", trainer.epoch()),
                bins,
                &map.values,
                trainer.agent().sigma0(),
            );
            std::fs::write(out.join("sigma_probe.svg"), svg).map_err(|e| HarnessError::Run(e.to_string()))?;
            if let Some(r) = rho {
                println!("spearman(sigma, visits) = {r:.4}");
            }
            println!("sigma0 = {}", trainer.agent().sigma0());
            Ok(true)
        }
        Command::Rerun { manifest, output, jobs } => {
            let report = wac_cli::rerun(&wac_cli::Manifest::load(&manifest)?, &output, jobs)?;
            let failures = report.failures();
            for f in &failures {
                eprintln!("seed {} failed: {}", f.seed, f.error.as_deref().unwrap_or(""));
            }
            println!("artifacts in {}", report.dir.display());
            Ok(failures.is_empty())
        }
        Command::OracleCheck => {
            let checks = oracle::run_checks();
            for c in &checks {
                println!("{} {:<40} {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            Ok(checks.iter().all(|c| c.passed))
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
