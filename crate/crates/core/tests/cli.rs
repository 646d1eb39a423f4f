//! End-to-end tests of the `provchain` binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use provchain::cli::config::RunConfig;
use serde_json::Value;

fn provchain(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_provchain"))
        .args(args)
        .env_remove("PROVCHAIN_SEED")
        .output()
        .expect("binary runs")
}

fn example_config() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/example.toml")
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn stdout_json(out: &Output) -> Value {
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).unwrap()
}

#[test]
fn every_subcommand_writes_its_reports() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let runs: [&[&str]; 9] = [
        &["scenario", "run"],
        &["bench", "anchor", "--max-batch-search"],
        &["bench", "evidence"],
        &["bench", "audit"],
        &["stress", "batching"],
        &["stress", "fees"],
        &["stress", "fairness", "--premium", "0.2", "--mass", "1000"],
        &["stress", "availability", "--trials", "2000"],
        &["stress", "oracle", "--events", "2000"],
    ];
    for args in runs {
        let mut full = args.to_vec();
        full.extend([
            "--out", out, "--format", "json", "--format", "csv", "--format", "md",
        ]);
        let o = provchain(&full);
        assert!(
            o.status.success(),
            "{args:?}: {}",
            String::from_utf8_lossy(&o.stderr)
        );
    }
    let names: Vec<String> = fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    for stem in [
        "scenario-run",
        "bench-anchor",
        "bench-evidence",
        "bench-audit",
        "stress-batching",
        "stress-fees",
        "stress-fairness",
        "stress-availability",
        "stress-oracle",
    ] {
        assert!(
            names.contains(&format!("{stem}.json")),
            "{stem}.json missing from {names:?}"
        );
        assert!(names.contains(&format!("{stem}.md")), "{stem}.md missing");
        assert!(
            names
                .iter()
                .any(|n| n.starts_with(stem) && n.ends_with(".csv")),
            "{stem} csv missing"
        );
    }

    let anchor = read_json(&dir.path().join("bench-anchor.json"));
    assert_eq!(anchor["payload"]["max_batch_search"]["max_batch"], 1022);
    let fees = fs::read_to_string(dir.path().join("stress-fees-cost_sensitivity.csv")).unwrap();
    assert_eq!(fees.lines().count(), 6, "{fees}");

    // The scorecard can be assembled from the reports just written.
    let o = provchain(&["report", "scorecard", "--inputs", out]);
    let card = stdout_json(&o);
    let rows = card["payload"]["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 5);
    for row in rows {
        let expected = if row["principle"] == "Ethics" {
            "qualitative"
        } else {
            "reported"
        };
        assert_eq!(row["status"], expected, "{row}");
    }
}

#[test]
fn scorecard_flags_missing_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let o = provchain(&[
        "report",
        "scorecard",
        "--inputs",
        dir.path().to_str().unwrap(),
    ]);
    let card = stdout_json(&o);
    for row in card["payload"]["rows"].as_array().unwrap() {
        if row["principle"] != "Ethics" {
            assert_eq!(row["status"], "missing_input", "{row}");
            assert!(!row["missing"].as_array().unwrap().is_empty());
        }
    }
}

#[test]
fn seed_comes_from_flag_then_env_then_config() {
    let seed_of = |o: &Output| stdout_json(o)["seed"].as_u64().unwrap();
    assert_eq!(seed_of(&provchain(&["stress", "fees"])), 42);
    let env = Command::new(env!("CARGO_BIN_EXE_provchain"))
        .args(["stress", "fees"])
        .env("PROVCHAIN_SEED", "7")
        .output()
        .unwrap();
    assert_eq!(seed_of(&env), 7);
    let both = Command::new(env!("CARGO_BIN_EXE_provchain"))
        .args(["stress", "fees", "--seed", "9"])
        .env("PROVCHAIN_SEED", "7")
        .output()
        .unwrap();
    assert_eq!(seed_of(&both), 9);
}

#[test]
fn different_seeds_change_simulated_output() {
    let a = provchain(&["scenario", "run", "--seed", "1"]);
    let b = provchain(&["scenario", "run", "--seed", "2"]);
    assert!(a.status.success() && b.status.success());
    assert_ne!(a.stdout, b.stdout);
}

#[test]
fn wall_clock_fields_are_opt_in() {
    let plain = String::from_utf8(provchain(&["bench", "audit"]).stdout).unwrap();
    assert!(!plain.contains("wall_clock"));
    assert!(plain.contains("\"deterministic\": true"));
    let kept =
        String::from_utf8(provchain(&["bench", "audit", "--keep-wall-clock"]).stdout).unwrap();
    assert!(kept.contains("wall_clock"));
    assert!(kept.contains("\"deterministic\": false"));
}

#[test]
fn example_config_loads_and_runs() {
    let path = example_config();
    let cfg = RunConfig::load(&path).unwrap();
    cfg.validate().unwrap();
    assert_eq!(cfg.analytics.fairness.premium, Some(0.2));
    let o = provchain(&[
        "--config",
        path.to_str().unwrap(),
        "--format",
        "json",
        "stress",
        "fairness",
    ]);
    let out = stdout_json(&o);
    assert_eq!(out["payload"]["ok"], true, "{out}");
    assert_eq!(out["payload"]["mass_threshold_lb"], 755.663);
}

#[test]
fn json_config_is_accepted() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.json");
    fs::write(&path, r#"{"seed": 5, "batcher": {"policy": {"B": 64}}}"#).unwrap();
    let o = provchain(&["--config", path.to_str().unwrap(), "stress", "batching"]);
    let out = stdout_json(&o);
    assert_eq!(out["seed"], 5);
    assert_eq!(out["payload"]["policy"]["B"], 64);
}

#[test]
fn invalid_inputs_exit_with_validation_code() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "[store.pin]\nk = 5\n").unwrap();
    assert_eq!(
        provchain(&["--config", bad.to_str().unwrap(), "scenario", "run"])
            .status
            .code(),
        Some(1)
    );
    let garbled = dir.path().join("garbled.toml");
    fs::write(&garbled, "seed = \"many\"\n").unwrap();
    assert_eq!(
        provchain(&["--config", garbled.to_str().unwrap(), "stress", "fees"])
            .status
            .code(),
        Some(1)
    );
    let missing = dir.path().join("absent.toml");
    assert_eq!(
        provchain(&["--config", missing.to_str().unwrap(), "stress", "fees"])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(provchain(&["stress", "fairness"]).status.code(), Some(1));
    assert_eq!(
        provchain(&["stress", "fairness", "--premium=-1"])
            .status
            .code(),
        Some(1)
    );
}

#[test]
fn usage_errors_exit_64() {
    assert_eq!(provchain(&["bench"]).status.code(), Some(64));
    assert_eq!(
        provchain(&["stress", "fees", "--format", "xml"])
            .status
            .code(),
        Some(64)
    );
    assert_eq!(provchain(&["--help"]).status.code(), Some(0));
}

#[test]
fn negative_suite_deviation_exits_2_and_still_reports() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("reactivate.toml");
    fs::write(&cfg, "[scenario]\nreactivate_suspended = true\n").unwrap();
    let o = provchain(&["--config", cfg.to_str().unwrap(), "scenario", "run"]);
    assert_eq!(o.status.code(), Some(2));
    let report: Value = serde_json::from_slice(&o.stdout).unwrap();
    let cases = report["payload"]["negative_cases"]["cases"]
        .as_array()
        .unwrap();
    let suspended = cases
        .iter()
        .find(|c| c["case"] == "suspended_actor_write")
        .unwrap();
    assert_eq!(suspended["passed"], false);
    assert!(String::from_utf8_lossy(&o.stderr).contains("SuspendedActorWrite"));
}

#[test]
fn incomplete_lifecycle_lowers_completeness() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("skip.toml");
    fs::write(&cfg, "[scenario]\nskip_steps = [\"Received\"]\n").unwrap();
    let out = stdout_json(&provchain(&[
        "--config",
        cfg.to_str().unwrap(),
        "scenario",
        "run",
    ]));
    assert_eq!(out["payload"]["metrics"]["C"], 0.0);
}
