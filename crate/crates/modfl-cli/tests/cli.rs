//! End-to-end tests of the command-line interface: exit codes, output
//! schemas (guarded by golden files), determinism of results files, and the
//! dataset loader's error reporting.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::atomic::{AtomicU32, Ordering};

static DIR_COUNTER: AtomicU32 = AtomicU32::new(0);

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_modfl")
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn golden(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name)
}

fn temp_out(tag: &str) -> PathBuf {
    let unique = DIR_COUNTER.fetch_add(1, Ordering::SeqCst);
    let dir = std::env::temp_dir().join(format!("modfl-cli-{tag}-{}-{unique}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    dir
}

fn run(args: &[&str]) -> Output {
    Command::new(bin()).args(args).output().expect("binary runs")
}

fn stderr(output: &Output) -> String {
    String::from_utf8_lossy(&output.stderr).into_owned()
}

fn stdout(output: &Output) -> String {
    String::from_utf8_lossy(&output.stdout).into_owned()
}

#[test]
fn simulate_matches_golden_results() {
    let out = temp_out("sim-golden");
    let output = run(&["simulate", "--config", fixture("simulate.json").to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(output.status.success(), "{}", stderr(&output));
    assert!(stdout(&output).contains("simulate: 3 rounds"));
    let produced = fs::read(out.join("results.ndjson")).unwrap();
    let expected = fs::read(golden("simulate_results.ndjson")).unwrap();
    assert_eq!(produced, expected, "results file deviates from the golden snapshot");
}

#[test]
fn simulate_is_deterministic_and_seed_sensitive() {
    let out_a = temp_out("sim-a");
    let out_b = temp_out("sim-b");
    let out_c = temp_out("sim-c");
    let config = fixture("simulate.json");
    for out in [&out_a, &out_b] {
        let output = run(&["simulate", "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()]);
        assert!(output.status.success(), "{}", stderr(&output));
    }
    let output = run(&[
        "simulate",
        "--config",
        config.to_str().unwrap(),
        "--seed",
        "999",
        "--out",
        out_c.to_str().unwrap(),
    ]);
    assert!(output.status.success(), "{}", stderr(&output));

    let a = fs::read(out_a.join("results.ndjson")).unwrap();
    let b = fs::read(out_b.join("results.ndjson")).unwrap();
    let c = fs::read(out_c.join("results.ndjson")).unwrap();
    assert_eq!(a, b, "identical invocations must produce identical bytes");
    assert_ne!(a, c, "a different seed must change the results");
}

#[test]
fn missing_config_exits_2_and_names_path() {
    let output = run(&["simulate", "--config", "/definitely/not/here.json", "--out", temp_out("x").to_str().unwrap()]);
    assert_eq!(output.status.code(), Some(2));
    assert!(stderr(&output).contains("/definitely/not/here.json"));
}

#[test]
fn unknown_config_key_exits_2() {
    let out = temp_out("badkey");
    fs::create_dir_all(&out).unwrap();
    let config = out.join("config.json");
    let mut text: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(fixture("simulate.json")).unwrap()).unwrap();
    text["unexpected_key"] = serde_json::json!(1);
    fs::write(&config, serde_json::to_string_pretty(&text).unwrap()).unwrap();
    let output = run(&["simulate", "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(output.status.code(), Some(2));
    assert!(stderr(&output).contains("unexpected_key"));
}

#[test]
fn zero_rounds_exits_2() {
    let out = temp_out("rounds0");
    fs::create_dir_all(&out).unwrap();
    let config = out.join("config.json");
    let mut text: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(fixture("simulate.json")).unwrap()).unwrap();
    text["rounds"] = serde_json::json!(0);
    fs::write(&config, serde_json::to_string(&text).unwrap()).unwrap();
    let output = run(&["simulate", "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(output.status.code(), Some(2));
    assert!(stderr(&output).contains("round count"));
}

#[test]
fn sweep_emits_plot_data_and_is_deterministic() {
    let config = fixture("sweep.json");
    let out_a = temp_out("sweep-a");
    let out_b = temp_out("sweep-b");
    let run_a = run(&["sweep", "--config", config.to_str().unwrap(), "--out", out_a.to_str().unwrap(), "--jobs", "2"]);
    assert!(run_a.status.success(), "{}", stderr(&run_a));
    let run_b = run(&["sweep", "--config", config.to_str().unwrap(), "--out", out_b.to_str().unwrap(), "--jobs", "1"]);
    assert!(run_b.status.success(), "{}", stderr(&run_b));

    for name in ["plot_modulated_iterative.csv", "plot_modulated_oneshot.csv", "plot_dpsgd.csv"] {
        let body = fs::read_to_string(out_a.join(name)).unwrap();
        let mut lines = body.lines();
        assert_eq!(lines.next(), Some("epsilon,mean_r2,sd_r2,method"), "{name} header");
        assert_eq!(lines.count(), 3, "{name} has one row per epsilon");
        // Identical bytes regardless of worker count.
        assert_eq!(body, fs::read_to_string(out_b.join(name)).unwrap(), "{name} differs between runs");
    }
    let a = fs::read(out_a.join("results.ndjson")).unwrap();
    let b = fs::read(out_b.join("results.ndjson")).unwrap();
    assert_eq!(a, b, "sweep results must be byte-identical across reruns");

    // Every emitted row stays within its declared budget, and the summary
    // carries the OLS reference.
    let text = String::from_utf8(a).unwrap();
    let mut saw_summary = false;
    let mut saw_crossover = false;
    for line in text.lines() {
        let record: serde_json::Value = serde_json::from_str(line).unwrap();
        assert_eq!(record["schema_version"], 1);
        match record["record_type"].as_str().unwrap() {
            "sweep_row" => {
                let eps = record["payload"]["eps"].as_f64().unwrap();
                let ledger_eps = record["payload"]["ledger"]["eps_converted"].as_f64().unwrap();
                assert!(ledger_eps <= eps + 1e-9);
            }
            "sweep_summary" => {
                saw_summary = true;
                assert!(record["payload"]["ols_r2"].as_f64().unwrap() > 0.5);
            }
            "crossover" => saw_crossover = true,
            _ => {}
        }
    }
    assert!(saw_summary && saw_crossover);
}

#[test]
fn bounds_matches_golden_results() {
    let out = temp_out("bounds");
    let output = run(&["bounds", "--config", fixture("bounds.json").to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(output.status.success(), "{}", stderr(&output));
    assert!(stdout(&output).contains("gradient_variance"));
    let produced = fs::read(out.join("results.ndjson")).unwrap();
    let expected = fs::read(golden("bounds_results.ndjson")).unwrap();
    assert_eq!(produced, expected, "bounds output deviates from the golden snapshot");
}

#[test]
fn bounds_rejects_malformed_parameters() {
    let out = temp_out("bounds-bad");
    fs::create_dir_all(&out).unwrap();
    let config = out.join("config.json");
    let mut text: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(fixture("bounds.json")).unwrap()).unwrap();
    text["alpha"] = serde_json::json!(1.5);
    fs::write(&config, serde_json::to_string(&text).unwrap()).unwrap();
    let output = run(&["bounds", "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(output.status.code(), Some(2));
    assert!(stderr(&output).contains("alpha"));
}

#[test]
fn validate_with_tiny_replicates_emits_structurally_valid_output() {
    // Ten replicates give wide standard errors; some checks may fail
    // statistically, but every emitted record must still be well formed.
    let out = temp_out("validate-tiny");
    fs::create_dir_all(&out).unwrap();
    let config = out.join("config.json");
    fs::write(&config, r#"{ "seed": 5, "replicates": 10 }"#).unwrap();
    let output = run(&["validate", "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(matches!(output.status.code(), Some(0) | Some(1)), "{}", stderr(&output));
    let text = fs::read_to_string(out.join("results.ndjson")).unwrap();
    let mut count = 0;
    for line in text.lines() {
        let record: serde_json::Value = serde_json::from_str(line).unwrap();
        assert_eq!(record["record_type"], "validation");
        assert_eq!(record["schema_version"], 1);
        for field in ["name", "expected", "estimate", "std_error", "tolerance", "pass"] {
            assert!(!record["payload"][field].is_null(), "missing {field}");
        }
        count += 1;
    }
    assert!(count >= 15, "expected the full validator suite, saw {count}");
}

#[test]
fn validate_passes_and_supports_selection() {
    let out = temp_out("validate");
    let output = run(&["validate", "--config", fixture("validate.json").to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(output.status.success(), "{}", stderr(&output));
    let text = stdout(&output);
    assert!(text.contains("gradient_unbiasedness"));
    assert!(text.contains("0 failed"));

    let out_only = temp_out("validate-only");
    let output = run(&[
        "validate",
        "--config",
        fixture("validate_only.json").to_str().unwrap(),
        "--out",
        out_only.to_str().unwrap(),
    ]);
    assert!(output.status.success(), "{}", stderr(&output));
    let text = stdout(&output);
    assert!(text.contains("centering_identity"));
    assert!(text.contains("1 validators"));

    // A selector that matches nothing is a configuration error.
    let out_none = temp_out("validate-none");
    fs::create_dir_all(&out_none).unwrap();
    let config = out_none.join("config.json");
    fs::write(&config, r#"{ "seed": 1, "replicates": 100, "only": ["no_such_validator"] }"#).unwrap();
    let output = run(&["validate", "--config", config.to_str().unwrap(), "--out", out_none.to_str().unwrap()]);
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn oneshot_runs_on_csv_with_overrides() {
    let out = temp_out("oneshot");
    let output = run(&[
        "oneshot",
        "--config",
        fixture("oneshot_csv.json").to_str().unwrap(),
        "--data",
        fixture("toy.csv").to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(output.status.success(), "{}", stderr(&output));
    let text = fs::read_to_string(out.join("results.ndjson")).unwrap();
    let oneshot_line = text.lines().find(|l| l.contains("\"record_type\":\"oneshot\"")).unwrap();
    let record: serde_json::Value = serde_json::from_str(oneshot_line).unwrap();
    assert_eq!(record["payload"]["beta_hat"].as_array().unwrap().len(), 2);
    assert_eq!(record["payload"]["ledger"]["per_round_rho"].as_array().unwrap().len(), 1);
}

#[test]
fn csv_loader_reports_row_and_column_errors() {
    let out = temp_out("csv-errors");

    // Missing file, named in the message.
    let output = run(&[
        "oneshot",
        "--config",
        fixture("oneshot_csv.json").to_str().unwrap(),
        "--data",
        "/no/such/data.csv",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(output.status.code(), Some(3));
    assert!(stderr(&output).contains("/no/such/data.csv"));

    // Missing target column, candidates listed.
    let output = run(&[
        "oneshot",
        "--config",
        fixture("oneshot_csv.json").to_str().unwrap(),
        "--data",
        fixture("toy.csv").to_str().unwrap(),
        "--target",
        "zzz",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(output.status.code(), Some(3));
    let err = stderr(&output);
    assert!(err.contains("'zzz'") && err.contains("x1, x2, y"));

    // Non-numeric cell cited by data row.
    let output = run(&[
        "oneshot",
        "--config",
        fixture("oneshot_csv.json").to_str().unwrap(),
        "--data",
        fixture("bad_cell.csv").to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(output.status.code(), Some(3));
    let err = stderr(&output);
    assert!(err.contains("row 7"), "{err}");
    assert!(err.contains("oops"), "{err}");
}

#[test]
fn inputs_are_never_mutated() {
    let config_before = fs::read(fixture("oneshot_csv.json")).unwrap();
    let csv_before = fs::read(fixture("toy.csv")).unwrap();
    let out = temp_out("no-mutate");
    let output = run(&[
        "oneshot",
        "--config",
        fixture("oneshot_csv.json").to_str().unwrap(),
        "--data",
        fixture("toy.csv").to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(output.status.success(), "{}", stderr(&output));
    assert_eq!(config_before, fs::read(fixture("oneshot_csv.json")).unwrap());
    assert_eq!(csv_before, fs::read(fixture("toy.csv")).unwrap());
}

#[test]
fn output_dir_env_override_is_honored() {
    let out = temp_out("env-dir");
    let output = Command::new(bin())
        .args(["bounds", "--config", fixture("bounds.json").to_str().unwrap()])
        .env("MODFL_OUT_DIR", &out)
        .output()
        .expect("binary runs");
    assert!(output.status.success(), "{}", stderr(&output));
    assert!(out.join("results.ndjson").exists());
}
