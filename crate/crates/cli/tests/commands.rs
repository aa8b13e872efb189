use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const DATA: &str = "tests/data/synthetic_mtqe.jsonl";
const GOLD: &str = "tests/data/calibration_gold.txt";

fn numbias(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_numbias"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn synthetic<'a>(cmd: &'a str, out: &'a str) -> Vec<&'a str> {
    vec![cmd, "--data", DATA, "--backend", "synthetic", "--seed", "42", "--out", out]
}

#[test]
fn missing_dataset_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.json");
    let o = numbias(&["audit", "--data", "does/not/exist.jsonl", "--backend", "synthetic", "--seed", "1", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("dataset not found"), "{err}");
    assert!(err.contains("--help"), "{err}");
    assert!(!out.exists());
}

#[test]
fn missing_data_flag_is_a_usage_error() {
    let o = numbias(&["audit", "--backend", "synthetic", "--seed", "1"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("--data"));
}

#[test]
fn backend_prerequisites_are_usage_errors() {
    for args in [
        vec!["audit", "--data", DATA, "--backend", "synthetic"],
        vec!["audit", "--data", DATA, "--backend", "http", "--model", "m"],
        vec!["audit", "--data", DATA, "--backend", "http", "--endpoint", "http://127.0.0.1:9"],
        vec!["audit", "--data", DATA, "--backend", "replay"],
        vec!["audit", "--data", DATA, "--backend", "replay", "--cache", "nope.jsonl"],
        vec!["audit", "--data", DATA, "--backend", "synthetic", "--seed", "1", "--samples", "0"],
    ] {
        let o = numbias(&args);
        assert_eq!(o.status.code(), Some(2), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    }
}

#[test]
fn audit_writes_report_and_sidecars() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run.json");
    let o = numbias(&synthetic("audit", out.to_str().unwrap()));
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v = read_json(&out);
    assert_eq!(v["run_config"]["seed"], 42);
    assert_eq!(v["run_config"]["backend"], "synthetic");
    assert_eq!(v["dataset_summary"]["n"], 200);
    assert_eq!(v["mode"]["value"], 8);
    for side in ["model_hist", "raw_hist", "gold_hist", "per_example"] {
        let p = dir.path().join(format!("run.{side}.csv"));
        assert!(p.exists(), "{side} missing");
    }
    let hist = fs::read_to_string(dir.path().join("run.model_hist.csv")).unwrap();
    assert!(hist.starts_with("support,count\n0,"));
    assert_eq!(hist.lines().count(), 11);
}

#[test]
fn fully_concentrated_run_is_reported_not_failed() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("d.json");
    let mut args = synthetic("audit", out.to_str().unwrap());
    args.extend(["--synthetic-lambda", "1.0"]);
    let o = numbias(&args);
    assert_eq!(o.status.code(), Some(0));
    let v = read_json(&out);
    assert_eq!(v["metrics"]["kurtosis_model"], "DEGENERATE");
    assert_eq!(v["metrics"]["r"], "UNDEFINED");
    assert_eq!(v["metrics"]["significant"], false);
    assert!(v.get("error").is_none());
}

#[test]
fn malformed_dataset_writes_partial_report() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("bad.jsonl");
    fs::write(&data, "{\"id\":\"a\",\"gold\":1,\"source\":\"x\"}\n").unwrap();
    let out = dir.path().join("p.json");
    let o = numbias(&["audit", "--data", data.to_str().unwrap(), "--backend", "synthetic", "--seed", "3", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let v = read_json(&out);
    let err = v["error"].as_str().unwrap();
    assert!(err.contains("hypothesis"), "{err}");
    assert!(v.get("metrics").is_none());
    assert_eq!(v["run_config"]["seed"], 3);
}

#[test]
fn empty_calibration_file_is_named_in_the_error() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty_gold.txt");
    fs::write(&empty, "\n\n").unwrap();
    let out = dir.path().join("c.json");
    let mut args = synthetic("calibrate", out.to_str().unwrap());
    args.extend(["--calibration-data", empty.to_str().unwrap()]);
    let o = numbias(&args);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("empty_gold.txt"));
    let v = read_json(&out);
    assert!(v["error"].as_str().unwrap().contains("empty_gold.txt"));
}

#[test]
fn identity_prior_leaves_metrics_unchanged() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("c.json");
    let mut args = synthetic("calibrate", out.to_str().unwrap());
    args.extend(["--calibration-data", GOLD, "--prior", "marginal"]);
    assert!(numbias(&args).status.success());
    let v = read_json(&out);
    let c = &v["calibration"];
    assert_eq!(c["kurtosis_calibrated"], v["metrics"]["kurtosis_model"]);
    assert_eq!(c["r_calibrated"], v["metrics"]["r"]);
    assert_eq!(c["p_calibrated"], v["metrics"]["p"]);
    assert_eq!(c["p_table"]["prob"], c["q_table"]["prob"]);
    assert!(c.get("beta").is_none());
}

#[test]
fn calibration_reports_raw_and_calibrated_side_by_side() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("c.json");
    let mut args = synthetic("calibrate", out.to_str().unwrap());
    args.extend(["--calibration-data", GOLD]);
    let o = numbias(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v = read_json(&out);
    let raw = v["metrics"]["kurtosis_model"].as_f64().unwrap();
    let cal = v["calibration"]["kurtosis_calibrated"].as_f64().unwrap();
    assert!(cal < raw, "{cal} vs {raw}");
    assert_eq!(v["run_config"]["calibration"]["marginal_pool"], 1000);
    assert_eq!(v["run_config"]["calibration"]["smoothing"], 1.0);
    assert_eq!(v["calibration"]["n_gold"], 300);
    let beta = &v["calibration"]["beta"];
    assert!(beta["alpha"].as_f64().unwrap() > 0.0);
    assert_eq!(v["calibration"]["p_table"]["pool_size"], 1000);
    for side in ["p_table", "q_table", "per_example_calibrated"] {
        assert!(dir.path().join(format!("c.{side}.csv")).exists());
    }
}

#[test]
fn default_sweep_records_setting_lists() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("s.json");
    assert!(numbias(&synthetic("sweep", out.to_str().unwrap())).status.success());
    let v = read_json(&out);
    let sweep = &v["run_config"]["sweep"];
    assert_eq!(sweep["temperatures"], serde_json::json!([0.4, 0.7, 1.0, 1.3]));
    assert_eq!(
        sweep["ranges"],
        serde_json::json!([{"min": 1, "max": 5}, {"min": 0, "max": 9}, {"min": 1, "max": 100}])
    );
    assert_eq!(v["sweep"]["entries"].as_array().unwrap().len(), 4);
    assert_eq!(v["sweep"]["entries"][0]["kurtosis"], "DEGENERATE");
}

#[test]
fn single_setting_sweep_matches_audit() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.json");
    let s = dir.path().join("s.json");
    let mut audit = synthetic("audit", a.to_str().unwrap());
    audit.extend(["--temperature", "1.0"]);
    assert!(numbias(&audit).status.success());
    let mut sweep = synthetic("sweep", s.to_str().unwrap());
    sweep.extend(["--temperatures", "1.0"]);
    assert!(numbias(&sweep).status.success());
    let (va, vs) = (read_json(&a), read_json(&s));
    let e = &vs["sweep"]["entries"][0];
    assert_eq!(e["kurtosis"], va["metrics"]["kurtosis_model"]);
    assert_eq!(e["r"], va["metrics"]["r"]);
    assert_eq!(e["p"], va["metrics"]["p"]);
    assert_eq!(e["mean_mode_ratio"], va["mode"]["mean_mode_ratio"]);
    assert_eq!(vs["sweep"]["best_setting_by_r"], 0);
}

#[test]
fn range_sweep_matches_golden() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("range.json");
    let mut args = synthetic("sweep", out.to_str().unwrap());
    args.extend(["--axis", "range"]);
    assert!(numbias(&args).status.success());
    let produced = fs::read(&out).unwrap();
    let golden_path = "tests/data/golden_range_sweep.json";
    if std::env::var_os("NUMBIAS_BLESS").is_some() {
        fs::write(golden_path, &produced).unwrap();
    }
    assert!(produced == fs::read(golden_path).unwrap(), "range sweep differs from golden");
    let v = read_json(&out);
    let entries = v["sweep"]["entries"].as_array().unwrap();
    assert_eq!(entries.len(), 3);
    assert!(entries.iter().all(|e| e["error"].is_null() && e["r"].is_number()));
}

#[test]
fn failing_sweep_setting_is_recorded() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("s.json");
    let mut args = synthetic("sweep", out.to_str().unwrap());
    // mode 8 is outside 1:5, so that setting fails while the others run
    args.extend(["--axis", "range", "--synthetic-mode", "8"]);
    let o = numbias(&args);
    assert_eq!(o.status.code(), Some(1));
    let v = read_json(&out);
    assert!(v["sweep"]["entries"][0]["error"].as_str().unwrap().contains("outside"));
    assert!(v["sweep"]["entries"][1]["r"].is_number());
    assert!(v["error"].as_str().unwrap().contains("1 of 3"));
}

#[test]
fn features_without_provider_has_two_rows() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("f.json");
    assert!(numbias(&synthetic("features", out.to_str().unwrap())).status.success());
    let v = read_json(&out);
    let rows = v["features"]["rows"].as_array().unwrap();
    let names: Vec<&str> = rows.iter().map(|r| r["feature"].as_str().unwrap()).collect();
    assert_eq!(names, ["source_length", "word_overlap"]);
    assert!(v["run_config"]["perplexity_provider"].is_null());

    let out2 = dir.path().join("f2.json");
    let mut args = synthetic("features", out2.to_str().unwrap());
    args.extend(["--ppl-provider", "mock"]);
    assert!(numbias(&args).status.success());
    let v2 = read_json(&out2);
    assert_eq!(v2["features"]["rows"].as_array().unwrap().len(), 5);
    assert_eq!(v2["run_config"]["perplexity_provider"], "mock");
    let csv = fs::read_to_string(dir.path().join("f2.features.csv")).unwrap();
    assert_eq!(csv.lines().count(), 6);
}

#[test]
fn replay_reproduces_recorded_audit() {
    let dir = tempfile::tempdir().unwrap();
    let cache = dir.path().join("cache.jsonl");
    let rec = dir.path().join("rec.json");
    let mut args = synthetic("audit", rec.to_str().unwrap());
    args.extend(["--cache", cache.to_str().unwrap()]);
    assert!(numbias(&args).status.success());

    let mut outs = Vec::new();
    for (i, par) in ["1", "8"].iter().enumerate() {
        let out = dir.path().join(format!("replay{i}.json"));
        let o = numbias(&["audit", "--data", DATA, "--backend", "replay", "--cache", cache.to_str().unwrap(), "--seed", "42", "--parallelism", par, "--out", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        outs.push(read_json(&out));
    }
    let recorded = read_json(&rec);
    for key in ["dataset_summary", "distribution", "metrics", "mode"] {
        assert_eq!(outs[0][key], recorded[key], "{key}");
        assert_eq!(outs[1][key], recorded[key], "{key}");
    }

    // a different range misses the cache
    let out = dir.path().join("miss.json");
    let o = numbias(&["audit", "--data", DATA, "--backend", "replay", "--cache", cache.to_str().unwrap(), "--range", "1:5", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(read_json(&out)["error"].as_str().unwrap().contains("cache"));
}
