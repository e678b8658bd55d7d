//! End-to-end tests of the command-line interface, driving the compiled
//! binary through the documented workflows.

use std::path::Path;
use std::process::{Command, Output};

fn cfrecon(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cfrecon"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn assert_success(out: &Output, context: &str) {
    assert!(
        out.status.success(),
        "{context} failed:\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr),
    );
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn full_pipeline_gen_train_attack_eval() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("moons.csv");
    let model = dir.path().join("target.json");
    let surrogate = dir.path().join("surrogate.json");
    let polytope = dir.path().join("polytope.json");

    let out = cfrecon(&[
        "gen-data",
        "--kind",
        "two-moons",
        "--n",
        "400",
        "--noise",
        "0.1",
        "--seed",
        "5",
        "--out",
        path_str(&data),
    ]);
    assert_success(&out, "gen-data");
    assert!(data.exists());

    let out = cfrecon(&[
        "train-target",
        "--data",
        path_str(&data),
        "--arch",
        "8,6",
        "--epochs",
        "40",
        "--seed",
        "3",
        "--out",
        path_str(&model),
    ]);
    assert_success(&out, "train-target");

    let out = cfrecon(&[
        "attack",
        "--kind",
        "cca",
        "--k",
        "0.5",
        "--target",
        path_str(&model),
        "--data",
        path_str(&data),
        "--n-queries",
        "60",
        "--surrogate-arch",
        "6,4",
        "--epochs",
        "40",
        "--seed",
        "9",
        "--out",
        path_str(&surrogate),
    ]);
    assert_success(&out, "attack cca");

    let out = cfrecon(&[
        "attack",
        "--kind",
        "polytope",
        "--target",
        path_str(&model),
        "--data",
        path_str(&data),
        "--n-queries",
        "60",
        "--seed",
        "9",
        "--out",
        path_str(&polytope),
    ]);
    assert_success(&out, "attack polytope");

    let hist = dir.path().join("hist.csv");
    let out = cfrecon(&[
        "eval",
        "--target",
        path_str(&model),
        "--surrogate",
        path_str(&surrogate),
        "--data",
        path_str(&data),
        "--uniform-size",
        "2000",
        "--histogram-out",
        path_str(&hist),
    ]);
    assert_success(&out, "eval");
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("fidelity_uniform"), "stdout: {stdout}");
    assert!(stdout.contains("fidelity_test"));
    assert!(hist.exists());

    let out = cfrecon(&[
        "eval",
        "--target",
        path_str(&model),
        "--polytope",
        path_str(&polytope),
        "--uniform-size",
        "1000",
    ]);
    assert_success(&out, "eval polytope");

    let out = cfrecon(&["lipschitz", "--model", path_str(&model)]);
    assert_success(&out, "lipschitz");
    let bound: f64 = String::from_utf8_lossy(&out.stdout).trim().parse().unwrap();
    assert!(bound > 0.0);
}

#[test]
fn theorem_commands_emit_tables() {
    let dir = tempfile::tempdir().unwrap();
    let out = cfrecon(&[
        "theorem1",
        "--dims",
        "2",
        "--n",
        "20,40",
        "--trials",
        "3",
        "--mc-samples",
        "5000",
        "--out-dir",
        path_str(dir.path()),
    ]);
    assert_success(&out, "theorem1");
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("theoretical"), "stdout: {stdout}");
    let csv = dir.path().join("theorem1_d2.csv");
    let contents = std::fs::read_to_string(&csv).unwrap();
    assert!(contents.starts_with("n,error,log_n,log_error"));
    let json = std::fs::read_to_string(dir.path().join("theorem1_d2.json")).unwrap();
    assert!(json.contains("\"fitted_slope\""));

    let coverage = dir.path().join("coverage.csv");
    let coverage_json = dir.path().join("coverage.json");
    let out = cfrecon(&[
        "theorem2",
        "--epsilon",
        "0.25",
        "--n",
        "10,50",
        "--trials",
        "50",
        "--samples",
        "4000",
        "--out",
        path_str(&coverage),
        "--out-json",
        path_str(&coverage_json),
    ]);
    assert_success(&out, "theorem2");
    let contents = std::fs::read_to_string(&coverage).unwrap();
    assert!(contents.starts_with("n,epsilon,k_eps,v_star,bound,empirical_success"));
    let json = std::fs::read_to_string(&coverage_json).unwrap();
    assert!(json.contains("\"v_estimates\""));
}

#[test]
fn run_and_report_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let config_path = dir.path().join("experiment.json");
    let out_dir = dir.path().join("out");
    let config = serde_json::json!({
        "dataset": {"kind": "two_moons", "n": 150, "noise": 0.05},
        "target_hidden": [6],
        "surrogate_hidden": [[5]],
        "attacks": ["baseline", "cca"],
        "schedule": {"steps": 1, "per_step": 15},
        "ensemble_size": 2,
        "seed_base": 42,
        "training": {
            "epochs": 10, "batch_size": 32, "l2_coefficient": 0.001,
            "learning_rate": 0.001, "optimizer": "adam", "shuffle_seed": 0
        },
        "uniform_reference_size": 300,
        "output_dir": out_dir
    });
    std::fs::write(&config_path, serde_json::to_vec_pretty(&config).unwrap()).unwrap();

    let out = cfrecon(&["run", "--config", path_str(&config_path)]);
    assert_success(&out, "run");
    let results = out_dir.join("results.csv");
    assert!(results.exists());
    assert!(out_dir.join("summary.json").exists());

    // Zero row loss through the aggregator.
    let raw = std::fs::read_to_string(&results).unwrap();
    let data_rows = raw.lines().count() - 1; // header
    assert_eq!(data_rows, 4); // 2 trials x 2 attacks x 1 arch x 1 step

    let summary_csv = dir.path().join("summary.csv");
    let out = cfrecon(&[
        "report",
        "--results",
        path_str(&results),
        "--out",
        path_str(&summary_csv),
    ]);
    assert_success(&out, "report");
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("baseline"));
    assert!(stdout.contains("cca"));
    assert!(summary_csv.exists());
}

#[test]
fn cfx_seed_env_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let config_path = dir.path().join("experiment.json");
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    let config = serde_json::json!({
        "dataset": {"kind": "two_moons", "n": 120, "noise": 0.05},
        "target_hidden": [5],
        "surrogate_hidden": [[4]],
        "attacks": ["baseline"],
        "schedule": {"steps": 1, "per_step": 10},
        "ensemble_size": 1,
        "seed_base": 1,
        "training": {
            "epochs": 5, "batch_size": 32, "l2_coefficient": 0.001,
            "learning_rate": 0.001, "optimizer": "adam", "shuffle_seed": 0
        },
        "uniform_reference_size": 200,
        "output_dir": out_a
    });
    std::fs::write(&config_path, serde_json::to_vec(&config).unwrap()).unwrap();

    // Same config, same env seed, different directories: identical rows.
    let run = |dir: &Path| {
        let out = Command::new(env!("CARGO_BIN_EXE_cfrecon"))
            .args([
                "run",
                "--config",
                path_str(&config_path),
                "--output-dir",
                path_str(dir),
            ])
            .env("CFX_SEED", "777")
            .output()
            .unwrap();
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    };
    run(&out_a);
    run(&out_b);
    let a = std::fs::read(out_a.join("results.csv")).unwrap();
    let b = std::fs::read(out_b.join("results.csv")).unwrap();
    assert_eq!(a, b);

    // And the env seed actually changes the outcome vs. the config seed.
    let out_c = dir.path().join("c");
    let out = Command::new(env!("CARGO_BIN_EXE_cfrecon"))
        .args([
            "run",
            "--config",
            path_str(&config_path),
            "--output-dir",
            path_str(&out_c),
        ])
        .output()
        .unwrap();
    assert!(out.status.success());
    let c = std::fs::read(out_c.join("results.csv")).unwrap();
    assert_ne!(a, c);
}

#[test]
fn exit_codes() {
    // Unknown subcommand: usage text, exit 1.
    let out = cfrecon(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(1));

    // Config error: exit 1 with the offending field path.
    let dir = tempfile::tempdir().unwrap();
    let config_path = dir.path().join("bad.json");
    std::fs::write(
        &config_path,
        br#"{"dataset": {"kind": "two_moons", "n": 100, "noise": 0.1},
            "target_hidden": [4], "surrogate_hidden": [[4]],
            "attacks": ["baseline"], "schedule": {"steps": 0, "per_step": 1},
            "ensemble_size": 1, "seed_base": 1, "output_dir": "/tmp/unused"}"#,
    )
    .unwrap();
    let out = cfrecon(&["run", "--config", path_str(&config_path)]);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("schedule.steps"), "stderr: {stderr}");

    // Missing model file: runtime error, exit 2.
    let out = cfrecon(&["eval", "--target", "/nonexistent/model.json"]);
    assert_eq!(out.status.code(), Some(2));

    // Help exits 0.
    let out = cfrecon(&["--help"]);
    assert_eq!(out.status.code(), Some(0));
}
