use std::fs;
use std::path::Path;
use std::process::Command;

use shaped_horizon::dqn::DqnConfig;
use shaped_horizon::harness::{
    bootstrap_ci, prepare, read_aggregate_csv, read_raw_csv, run_experiment, ExperimentConfig, MonteCarloConfig,
    Variant, AGGREGATE_HEADER, RAW_HEADER,
};
use shaped_horizon::maxent::MaxEntConfig;
use shaped_horizon::Error;

fn tiny(dir: &Path) -> ExperimentConfig {
    ExperimentConfig {
        n_seeds: 2,
        maxent: MaxEntConfig {
            n_iterations: 20,
            ..MaxEntConfig::default()
        },
        n_demos: 10,
        dqn: DqnConfig {
            episodes: 10,
            steps_per_episode: 50,
            batch_size: 32,
            warmup: 32,
            epsilon_decay_steps: 200,
            ..DqnConfig::default()
        },
        bootstrap_resamples: 200,
        output_dir: dir.to_path_buf(),
        ..ExperimentConfig::default()
    }
}

fn listing(dir: &Path) -> Vec<String> {
    let mut names: Vec<String> = match fs::read_dir(dir) {
        Ok(entries) => entries.map(|e| e.unwrap().file_name().to_string_lossy().into_owned()).collect(),
        Err(_) => Vec::new(),
    };
    names.sort();
    names
}

#[test]
fn one_seed_one_variant_gives_ten_rows() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig {
        n_seeds: 1,
        variants: vec![Variant::R0],
        ..tiny(dir.path())
    };
    let out = run_experiment(&cfg).unwrap();
    assert_eq!(out.rows.len(), 10);
    assert_eq!(out.aggregate.len(), 10);
    let raw = read_raw_csv(&dir.path().join("raw.csv")).unwrap();
    assert_eq!(raw, out.rows);
    assert!(raw.iter().all(|r| r.variant == Variant::R0 && r.seed == 0 && r.eval_return.is_finite()));
    assert_eq!(listing(dir.path()), vec!["aggregate.csv", "raw.csv", "report.json"]);
}

#[test]
fn reruns_are_byte_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let first = run_experiment(&tiny(a.path())).unwrap();
    assert_eq!(first.rows.len(), 2 * 3 * 10);
    run_experiment(&ExperimentConfig {
        threads: Some(1),
        ..tiny(b.path())
    })
    .unwrap();
    for file in ["raw.csv", "aggregate.csv", "report.json"] {
        assert_eq!(fs::read(a.path().join(file)).unwrap(), fs::read(b.path().join(file)).unwrap(), "{file}");
    }
    let raw = fs::read_to_string(a.path().join("raw.csv")).unwrap();
    assert!(raw.starts_with(&format!("{RAW_HEADER}\n")));
    assert!(!raw.contains('\r'));
    let agg = fs::read_to_string(a.path().join("aggregate.csv")).unwrap();
    assert!(agg.starts_with(&format!("{AGGREGATE_HEADER}\n")));
    for row in read_aggregate_csv(&a.path().join("aggregate.csv")).unwrap() {
        assert!(row.ci_lo <= row.mean && row.mean <= row.ci_hi);
    }
}

#[test]
fn monte_carlo_shaping_tracks_oracle() {
    let dir = tempfile::tempdir().unwrap();
    let oracle = prepare(&tiny(dir.path())).unwrap();
    let mc = prepare(&ExperimentConfig {
        oracle: false,
        monte_carlo: MonteCarloConfig::default(),
        ..tiny(dir.path())
    })
    .unwrap();
    assert!(mc.report.policy_invariant);
    let diff = oracle.r_phi.max_abs_diff(&mc.r_phi);
    assert!(diff <= 0.05, "max shaped-reward difference {diff}");
}

#[test]
fn bootstrap_matches_binomial_standard_error() {
    let values: Vec<f64> = (0..500).map(|i| (i % 2) as f64).collect();
    let (mean, lo, hi) = bootstrap_ci(&values, 10_000, 0.95, 0).unwrap();
    assert_eq!(mean, 0.5);
    let analytic = 1.96 * 0.5 / 500f64.sqrt();
    let half_width = (hi - lo) / 2.0;
    assert!((half_width - analytic).abs() <= 0.2 * analytic, "half-width {half_width} vs {analytic}");
}

#[test]
fn failures_name_the_stage_and_leave_no_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let cfg = ExperimentConfig {
        maxent: MaxEntConfig {
            learning_rate: 1e307,
            ..MaxEntConfig::default()
        },
        ..tiny(&out)
    };
    match run_experiment(&cfg) {
        Err(Error::Stage { stage, seed, source }) => {
            assert_eq!(stage, "maxent");
            assert_eq!(seed, 0);
            assert!(matches!(*source, Error::Diverged { .. }));
        }
        other => panic!("expected a maxent stage error, got {other:?}"),
    }
    assert!(listing(&out).is_empty());

    let cfg = ExperimentConfig {
        variants: vec![Variant::RPhi],
        dqn: DqnConfig {
            learning_rate: 1e300,
            ..tiny(&out).dqn
        },
        ..tiny(&out)
    };
    let err = run_experiment(&cfg).unwrap_err();
    assert!(err.to_string().contains("dqn"), "{err}");
    assert!(matches!(err, Error::Stage { stage: "dqn", .. }));
    assert!(listing(&out).is_empty());
}

#[test]
fn invalid_configs_rejected_before_running() {
    let dir = tempfile::tempdir().unwrap();
    for cfg in [
        ExperimentConfig {
            n_seeds: 0,
            ..tiny(dir.path())
        },
        ExperimentConfig {
            seeds: Some(vec![1, 1]),
            ..tiny(dir.path())
        },
        ExperimentConfig {
            variants: vec![],
            ..tiny(dir.path())
        },
    ] {
        assert!(matches!(run_experiment(&cfg), Err(Error::Config(_))));
    }
}

fn cli(args: &[&str]) -> std::process::Output {
    let out = Command::new(env!("CARGO_BIN_EXE_shaped-horizon")).args(args).output().unwrap();
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

#[test]
fn cli_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let p = |name: &str| dir.path().join(name).to_string_lossy().into_owned();
    cli(&["gridworld", "--out", &p("grid.json")]);
    let solved = cli(&["solve", "--mdp", &p("grid.json")]);
    let solved: serde_json::Value = serde_json::from_slice(&solved.stdout).unwrap();
    let v0 = solved["values"][0].as_f64().unwrap();
    assert!((v0 - 0.99f64.powi(7)).abs() <= 1e-9);
    cli(&["demos", "--mdp", &p("grid.json"), "--start", "0", "--count", "5", "--out", &p("demos.jsonl")]);
    assert_eq!(fs::read_to_string(p("demos.jsonl")).unwrap().lines().count(), 5);
    cli(&["shape", "--mdp", &p("grid.json"), "--out", &p("shaped.json"), "--report", &p("shape.json")]);
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(p("shape.json")).unwrap()).unwrap();
    assert!(report["criterion_after"].as_f64().unwrap() <= report["criterion_before"].as_f64().unwrap());
    cli(&[
        "irl-maxent", "--mdp", &p("grid.json"), "--demos", &p("demos.jsonl"), "--out", &p("maxent.json"),
        "--log", &p("maxent.csv"), "--iterations", "5",
    ]);
    let log = fs::read_to_string(p("maxent.csv")).unwrap();
    assert!(log.starts_with("iteration,gradient_inf_norm\n"));
    assert_eq!(log.lines().count(), 6);
    cli(&[
        "train-dqn", "--reward", &p("shaped.json"), "--eval-reward", &p("grid.json"), "--start", "0",
        "--out", &p("curve.csv"), "--episodes", "3", "--steps-per-episode", "20", "--batch-size", "8",
        "--warmup", "8",
    ]);
    let curve = fs::read_to_string(p("curve.csv")).unwrap();
    assert!(curve.starts_with("episode,eval_return\n"));
    assert_eq!(curve.lines().count(), 4);

    let cfg = serde_json::json!({
        "n_seeds": 1,
        "variants": ["r0", "r_phi"],
        "dqn": {"episodes": 4, "steps_per_episode": 20, "batch_size": 8, "warmup": 8},
        "bootstrap_resamples": 50,
        "output_dir": p("exp"),
    });
    fs::write(p("exp.json"), cfg.to_string()).unwrap();
    cli(&["experiment", "--config", &p("exp.json"), "--seeds", "2"]);
    let raw = read_raw_csv(&dir.path().join("exp/raw.csv")).unwrap();
    assert_eq!(raw.len(), 2 * 2 * 4);
    cli(&["aggregate", "--raw", &p("exp/raw.csv"), "--out", &p("agg.csv"), "--resamples", "50"]);
    assert_eq!(read_aggregate_csv(&dir.path().join("agg.csv")).unwrap().len(), 2 * 4);

    let bad = Command::new(env!("CARGO_BIN_EXE_shaped-horizon"))
        .args(["solve", "--mdp", &p("missing.json")])
        .output()
        .unwrap();
    assert!(!bad.status.success());
    assert!(!bad.stderr.is_empty());
}
