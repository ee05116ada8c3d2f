use std::path::Path;
use std::process::Command;

use wac_cli::plot::{emit_plots, heatmap_svg, read_sigma_dump, read_table};
use wac_cli::wac_core::agents::Algorithm;
use wac_cli::{rerun, run_experiment, run_sweep, ExperimentConfig, HarnessError, Manifest, SweepSpec};

fn tiny(env: &str, alg: Algorithm, dir: &Path) -> ExperimentConfig {
    let mut c = ExperimentConfig::new(env, alg);
    c.agent.hidden = vec![8, 8];
    c.agent.batch_size = 16;
    c.train.explore_steps = 100;
    c.train.train_steps = 5;
    c.train.eval_window = 200;
    c.train.synthetic_probes = 64;
    c.epochs = 2;
    c.seeds = vec![0, 1];
    c.output = Some(dir.to_path_buf());
    c
}

fn bytes(p: impl AsRef<Path>) -> Vec<u8> {
    std::fs::read(p.as_ref()).unwrap_or_else(|e| panic!("{}: {e}", p.as_ref().display()))
}

#[test]
fn run_writes_every_artifact() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("lqg");
    let report = run_experiment(&tiny("lqg", Algorithm::OeWac, &dir), 1).unwrap();
    assert!(report.failures().is_empty());
    for f in ["merged.csv", "manifest.json"] {
        assert!(dir.join(f).is_file(), "{f}");
    }
    for seed in [0, 1] {
        for f in ["metrics.csv", "sigma_probe.csv", "sigma_probe.svg", "checkpoint.json", "summary.json"] {
            assert!(dir.join(format!("seed-{seed}")).join(f).is_file(), "seed {seed} {f}");
        }
    }
    let metrics = read_table(&dir.join("seed-0/metrics.csv")).unwrap();
    assert_eq!(metrics.rows.len(), 2);
    assert_eq!(metrics.columns[0], "epoch");
    let manifest = Manifest::load(&dir.join("manifest.json")).unwrap();
    assert_eq!(manifest.seeds.len(), 2);
    assert!(manifest.seeds.iter().all(|s| s.status == "ok"));
    let summary = report.summaries()[0];
    assert!(summary.sigma_count_spearman.is_some());
}

#[test]
fn merged_intervals_recompute_from_seed_logs() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("rs");
    let mut cfg = tiny("riverswim", Algorithm::Sac, &dir);
    cfg.seeds = vec![0, 1, 2, 3, 4];
    run_experiment(&cfg, 2).unwrap();
    let merged = read_table(&dir.join("merged.csv")).unwrap();
    let seeds: Vec<_> = (0..5).map(|s| read_table(&dir.join(format!("seed-{s}/metrics.csv"))).unwrap()).collect();
    for metric in ["return_mean", "coverage", "alpha", "critic_loss"] {
        let means = merged.column(&format!("{metric}_mean")).unwrap();
        let cis = merged.column(&format!("{metric}_ci95")).unwrap();
        for (e, (m, ci)) in means.iter().zip(&cis).enumerate() {
            let xs: Vec<f64> = seeds.iter().map(|t| t.column(metric).unwrap()[e]).collect();
            let n = xs.len() as f64;
            let mean = xs.iter().sum::<f64>() / n;
            let sd = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
            assert!((m - mean).abs() <= 1e-12 * (1.0 + mean.abs()), "{metric} epoch {e}");
            assert!((ci - 1.96 * sd / n.sqrt()).abs() <= 1e-12 * (1.0 + ci.abs()), "{metric} epoch {e}");
        }
    }
    assert_eq!(merged.column("seeds").unwrap(), vec![5.0, 5.0]);
}

#[test]
fn reruns_are_bitwise_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    run_experiment(&tiny("point1", Algorithm::MeWac, &a), 1).unwrap();
    let b = tmp.path().join("b");
    rerun(&Manifest::load(&a.join("manifest.json")).unwrap(), &b, 2).unwrap();
    for f in ["merged.csv", "seed-0/metrics.csv", "seed-1/metrics.csv", "seed-0/sigma_probe.csv"] {
        assert_eq!(bytes(a.join(f)), bytes(b.join(f)), "{f}");
    }
}

#[test]
fn sweep_expands_the_grid() {
    let tmp = tempfile::tempdir().unwrap();
    let mut base = tiny("lqg", Algorithm::OeWac, &tmp.path().join("sweep"));
    base.epochs = 1;
    base.seeds = vec![0];
    let grid = [("lambda", vec![0.0, 0.6]), ("delta", vec![0.8, 0.95])]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v.into_iter().map(toml::Value::Float).collect()))
        .collect();
    let spec = SweepSpec { base, grid };
    assert_eq!(spec.size(), 4);
    let labels: Vec<String> = spec.points().unwrap().into_iter().map(|p| p.label).collect();
    assert_eq!(
        labels,
        ["delta=0.8_lambda=0.0", "delta=0.8_lambda=0.6", "delta=0.95_lambda=0.0", "delta=0.95_lambda=0.6"]
    );
    let report = run_sweep(&spec, 1).unwrap();
    assert!(!report.failed());
    assert_eq!(report.rows.len(), 4);
    let table = std::fs::read_to_string(tmp.path().join("sweep/sweep.csv")).unwrap();
    assert_eq!(table.lines().count(), 5);
    let text = "[base]\nenv = \"lqg\"\nepochs = 1\n[base.agent]\nhidden = [8]\n[grid]\nrho = [0.3, 0.6]\n";
    assert_eq!(SweepSpec::from_toml_str(text).unwrap().size(), 2);
    assert!(SweepSpec::from_toml_str("[base]\nenv = \"lqg\"\n").is_err());
    assert!(tmp.path().join("sweep/plots/coverage.svg").is_file());
}

#[test]
fn config_errors_are_specific() {
    let bad = ExperimentConfig::from_toml_str("env = \"lqg\"\nepochs = 3\nlearning_rat = 0.1\n").unwrap_err();
    assert!(matches!(bad, HarnessError::Config(_)) && bad.to_string().contains("learning_rat"), "{bad}");
    assert_eq!(bad.exit_code(), 2);
    let bad = ExperimentConfig::from_toml_str("env = \"lqg\"\n[agent]\nhiden = [8]\n").unwrap_err();
    assert!(bad.to_string().contains("hiden"), "{bad}");

    let mut c = ExperimentConfig::new("lqg", Algorithm::OeWac);
    c.set("lambda", "0.3").unwrap();
    c.set("hidden", "[8, 8]").unwrap();
    c.set("eval_window", "500").unwrap();
    assert_eq!((c.agent.wac.lambda, c.agent.hidden.clone(), c.train.eval_window), (0.3, vec![8, 8], 500));
    assert!(c.set("agent.wac.lamda", "0.3").is_err());
    c.set("delta", "1.5").unwrap();
    assert!(c.validate().is_err());

    let mut c = ExperimentConfig::new("riverswim", Algorithm::Sac);
    c.env_overrides.insert("max_stat".into(), toml::Value::Float(10.0));
    assert!(c.validate().is_err());
    c.env_overrides.clear();
    c.env_overrides.insert("max_state".into(), toml::Value::Float(10.0));
    c.validate().unwrap();
    c.seeds = vec![1, 1];
    assert!(c.validate().is_err());
}

#[test]
fn plots_warn_on_empty_metrics_and_report_bad_rows() {
    let tmp = tempfile::tempdir().unwrap();
    let good = tmp.path().join("good.csv");
    std::fs::write(&good, "epoch,seeds,return_mean_mean,return_mean_ci95,sigma_visited_mean_mean,sigma_visited_mean_ci95\n1,2,0.5,0.1,NaN,NaN\n2,2,0.7,0.2,NaN,NaN\n").unwrap();
    let report = emit_plots(&[("sac".into(), good.clone())], &tmp.path().join("plots")).unwrap();
    assert_eq!(report.written.len(), 1);
    assert!(report.warnings.iter().any(|w| w.contains("sigma_visited_mean")), "{:?}", report.warnings);
    let svg = std::fs::read_to_string(&report.written[0]).unwrap();
    assert!(svg.contains("<polygon") && svg.contains("<polyline") && svg.contains("sac"));
    let again = emit_plots(&[("sac".into(), good)], &tmp.path().join("plots2")).unwrap();
    assert_eq!(svg, std::fs::read_to_string(&again.written[0]).unwrap());

    let bad = tmp.path().join("bad.csv");
    std::fs::write(&bad, "epoch,coverage_mean,coverage_ci95\n1,0.1,0.0\n2,zero,0.0\n").unwrap();
    match read_table(&bad) {
        Err(HarnessError::Csv { row, column, .. }) => assert_eq!((row, column.as_str()), (2, "coverage_mean")),
        other => panic!("expected a CSV error, got {other:?}"),
    }
    let short = tmp.path().join("short.csv");
    std::fs::write(&short, "epoch,coverage_mean,coverage_ci95\n1,0.1\n").unwrap();
    assert!(matches!(read_table(&short), Err(HarnessError::Csv { row: 1, .. })));
}

#[test]
fn heatmap_has_a_sigma0_colorbar() {
    let tmp = tempfile::tempdir().unwrap();
    let dump = tmp.path().join("s.csv");
    let mut text = String::from("i,j,x,y,sigma\n");
    for i in 0..3 {
        for j in 0..3 {
            text.push_str(&format!("{i},{j},0,0,{}\n", (i * 3 + j) as f64 * 0.5));
        }
    }
    std::fs::write(&dump, text).unwrap();
    let (bins, values) = read_sigma_dump(&dump).unwrap();
    assert_eq!((bins, values[5]), (3, 2.5));
    let svg = heatmap_svg("t", bins, &values, 4.0);
    assert_eq!(svg.matches("<rect").count(), 1 + 9 + 1 + 64 + 1);
    assert!(svg.contains(">4<") && svg.contains(">0<"));
}

#[test]
fn binary_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let exe = env!("CARGO_BIN_EXE_wac");
    let out = Command::new(exe)
        .args(["run", "--env", "riverswim", "--algo", "sac", "--epochs", "1", "--seeds", "3", "--output"])
        .arg(tmp.path().join("r"))
        .args([
            "--set",
            "hidden=[8]",
            "--set",
            "batch_size=8",
            "--set",
            "train_steps=2",
            "--set",
            "explore_steps=50",
            "--set",
            "eval_window=100",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(tmp.path().join("r/seed-3/metrics.csv").is_file());

    let out = Command::new(exe).args(["run", "--env", "lqg", "--set", "nonsense=1"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let out = Command::new(exe).args(["run", "--env", "cartpole"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let out = Command::new(exe)
        .args(["plot", "--input"])
        .arg(tmp.path().join("missing.csv"))
        .arg("--out")
        .arg(tmp.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let out = Command::new(exe)
        .args(["probe-sigma", "--checkpoint"])
        .arg(tmp.path().join("r/seed-3/checkpoint.json"))
        .arg("--out")
        .arg(tmp.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2), "sac has no sigma");
}

#[test]
fn manifests_with_nan_summaries_load() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("sac");
    let report = run_experiment(&tiny("riverswim", Algorithm::Sac, &dir), 1).unwrap();
    assert!(report.summaries()[0].final_sigma_synthetic.is_nan());
    let manifest = Manifest::load(&dir.join("manifest.json")).unwrap();
    assert!(manifest.seeds[0].summary.as_ref().unwrap().final_sigma_synthetic.is_nan());
}
