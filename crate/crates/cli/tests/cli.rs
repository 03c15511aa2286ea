use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn eblr(dir: &Path, args: &[&str]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_eblr"));
    cmd.current_dir(dir).args(args);
    for (key, _) in std::env::vars().filter(|(k, _)| k.starts_with("EBLR_")) {
        cmd.env_remove(key);
    }
    cmd.output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn read(dir: &Path, name: &str) -> String {
    fs::read_to_string(dir.join(name)).unwrap()
}

/// Synthetic CSV plus a trained default model in a fresh directory.
fn trained(length: &str) -> TempDir {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&eblr(dir.path(), &["synth", "--length", length, "-o", "synth.csv"])), 0);
    let out = eblr(dir.path(), &["train", "-i", "synth.csv", "--f-max", "5", "--base", "ols", "-o", "model.json"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    dir
}

/// The last `n` rows of the synthetic file without the target column.
fn future_file(dir: &Path, n: usize) -> PathBuf {
    let text = read(dir, "synth.csv");
    let lines: Vec<&str> = text.lines().collect();
    let drop_target = |line: &str| {
        let cells: Vec<&str> = line.split(',').collect();
        [cells[0], cells[1], cells[3], cells[4]].join(",")
    };
    let mut out = vec![drop_target(lines[0])];
    out.extend(lines[lines.len() - n..].iter().map(|l| drop_target(l)));
    let path = dir.join("future.csv");
    fs::write(&path, out.join("\n") + "\n").unwrap();
    path
}

#[test]
fn synth_writes_requested_rows_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(code(&eblr(d, &["synth", "--length", "2048", "--seed", "7", "-o", "a.csv"])), 0);
    assert_eq!(code(&eblr(d, &["synth", "--length", "2048", "--seed", "7", "-o", "b.csv"])), 0);
    let a = fs::read(d.join("a.csv")).unwrap();
    assert_eq!(a, fs::read(d.join("b.csv")).unwrap());
    let text = read(d, "a.csv");
    assert_eq!(text.lines().next(), Some("series_id,timestamp,target,isWeekend,isPromotion"));
    assert_eq!(text.lines().count(), 2049);
    assert_eq!(code(&eblr(d, &["synth", "--length", "2048", "--seed", "8", "-o", "c.csv"])), 0);
    assert_ne!(a, fs::read(d.join("c.csv")).unwrap());
}

#[test]
fn synth_rejects_negative_noise_before_touching_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = eblr(dir.path(), &["synth", "--noise-std", "-1", "-o", "x.csv"]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("noise_std"));
    assert!(!dir.path().join("x.csv").exists());
}

#[test]
fn outputs_need_force_to_be_replaced() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("s.csv"), "keep").unwrap();
    let out = eblr(d, &["synth", "--length", "50", "-o", "s.csv"]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("--force"));
    assert_eq!(read(d, "s.csv"), "keep");
    assert_eq!(code(&eblr(d, &["synth", "--length", "50", "-o", "s.csv", "--force"])), 0);
    assert_eq!(read(d, "s.csv").lines().count(), 51);
}

#[test]
fn outputs_never_replace_inputs() {
    let dir = trained("300");
    let before = read(dir.path(), "synth.csv");
    let out = eblr(dir.path(), &["train", "-i", "synth.csv", "-o", "synth.csv", "--force"]);
    assert_eq!(code(&out), 1);
    assert_eq!(read(dir.path(), "synth.csv"), before);
}

#[test]
fn flag_errors_exit_with_validation_code() {
    let dir = trained("300");
    let d = dir.path();
    let out = eblr(d, &["train", "-i", "synth.csv", "--f-max", "0", "-o", "m2.json"]);
    assert_eq!(code(&out), 1);
    assert!(!d.join("m2.json").exists());
    assert_eq!(code(&eblr(d, &["train", "--base", "ridge", "-o", "m3.json"])), 1);
    assert_eq!(code(&eblr(d, &["no-such-command"])), 1);
    assert_eq!(code(&eblr(d, &["--help"])), 0);
}

#[test]
fn data_errors_exit_with_runtime_code() {
    let dir = trained("300");
    let d = dir.path();
    let out = eblr(d, &["evaluate", "-i", "synth.csv", "--n-windows", "25", "--horizon", "14"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("at least 351"), "{}", stderr(&out));
    assert_eq!(stderr(&out).trim().lines().count(), 1);
    assert_eq!(code(&eblr(d, &["train", "-i", "missing.csv", "-o", "m4.json", "--curve", "c4.csv"])), 2);
    fs::write(d.join("broken.json"), "{").unwrap();
    assert_eq!(code(&eblr(d, &["explain", "--model", "broken.json"])), 2);
}

#[test]
fn train_is_deterministic_and_writes_learning_curve() {
    let dir = trained("400");
    let d = dir.path();
    let first = read(d, "model.json");
    let out = eblr(d, &["train", "-i", "synth.csv", "--f-max", "5", "--base", "ols", "-o", "model.json", "--force"]);
    assert_eq!(code(&out), 0);
    assert_eq!(read(d, "model.json"), first);

    let model: serde_json::Value = serde_json::from_str(&first).unwrap();
    let rules = model["rules"].as_array().unwrap();
    assert!(!rules.is_empty() && rules.len() <= 5);

    let curve = read(d, "learning_curve.csv");
    let mut lines = curve.lines();
    assert_eq!(lines.next(), Some("iteration,train_nrmse"));
    let values: Vec<f64> = lines.map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert_eq!(values.len(), rules.len() + 1);
    assert!(values.windows(2).all(|w| w[1] <= w[0]));
}

#[test]
fn forecast_writes_monotone_quantiles() {
    let dir = trained("400");
    let d = dir.path();
    future_file(d, 14);
    let out = eblr(d, &["forecast", "--model", "model.json", "-i", "future.csv", "-o", "fc.csv"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = read(d, "fc.csv");
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("series_id,timestamp,point,q05,q25,q50,q75,q95"));
    let rows: Vec<Vec<f64>> =
        lines.map(|l| l.split(',').skip(3).map(|v| v.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 14);
    for r in &rows {
        assert!(r.windows(2).all(|w| w[0] <= w[1]), "{r:?}");
    }
}

#[test]
fn forecast_with_one_quantile_has_one_quantile_column() {
    let dir = trained("300");
    let d = dir.path();
    future_file(d, 5);
    let out = eblr(d, &["forecast", "--model", "model.json", "-i", "future.csv", "--quantiles", "0.5", "-o", "fc.csv"]);
    assert_eq!(code(&out), 0);
    let text = read(d, "fc.csv");
    assert_eq!(text.lines().next(), Some("series_id,timestamp,point,q50"));
    assert!(text.lines().skip(1).all(|l| l.split(',').count() == 4));
}

#[test]
fn empty_future_gives_header_only() {
    let dir = trained("300");
    let d = dir.path();
    future_file(d, 0);
    let out = eblr(d, &["forecast", "--model", "model.json", "-i", "future.csv", "-o", "fc.csv"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert_eq!(read(d, "fc.csv"), "series_id,timestamp,point,q05,q25,q50,q75,q95\n");
}

#[test]
fn forecast_names_missing_covariate() {
    let dir = trained("300");
    let d = dir.path();
    fs::write(d.join("future.csv"), "series_id,timestamp,isWeekend\nsynthetic,2016-01-01,0\n").unwrap();
    let out = eblr(d, &["forecast", "--model", "model.json", "-i", "future.csv", "-o", "fc.csv"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("isPromotion"));
    assert!(!d.join("fc.csv").exists());
}

#[test]
fn calendar_models_derive_calendar_columns_for_future_rows() {
    let dir = trained("300");
    let d = dir.path();
    let out = eblr(d, &["train", "-i", "synth.csv", "--calendar", "-o", "cal.json", "--curve", "cal.csv"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    future_file(d, 7);
    let out = eblr(d, &["forecast", "--model", "cal.json", "-i", "future.csv", "-o", "fc.csv"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert_eq!(read(d, "fc.csv").lines().count(), 8);
}

#[test]
fn evaluate_report_headers_are_fixed() {
    let dir = trained("300");
    let d = dir.path();
    let out = eblr(d, &["evaluate", "-i", "synth.csv", "--n-windows", "1", "--horizon", "14"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let csv = read(d, "report.csv");
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "window,horizon,metric,value");
    let metrics: Vec<&str> = lines[1..].iter().map(|l| l.split(',').nth(2).unwrap()).collect();
    let per_window = ["nrmse", "nd", "wspl_0.05", "wspl_0.25", "wspl_0.5", "wspl_0.75", "wspl_0.95", "mean_wspl"];
    assert_eq!(metrics, [per_window, per_window].concat());
    assert!(lines[1..9].iter().all(|l| l.starts_with("1,14,")));
    assert!(lines[9..].iter().all(|l| l.starts_with("mean,14,")));

    let json: serde_json::Value = serde_json::from_str(&read(d, "report.json")).unwrap();
    assert_eq!(json["n_windows"], 1);
    assert_eq!(json["windows"].as_array().unwrap().len(), 1);
    assert_eq!(json["windows"][0]["nrmse"], json["aggregates"]["nrmse"]);
}

#[test]
fn explain_splits_importance_between_weekend_and_promotion() {
    let dir = trained("2048");
    let d = dir.path();
    let out = eblr(d, &["explain", "--model", "model.json"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert_eq!(read(d, "importance.csv"), "name,score\nisPromotion,0.5\nisWeekend,0.5\n");
    let report: serde_json::Value = serde_json::from_str(&read(d, "rule_report.json")).unwrap();
    assert_eq!(report["rules"][0]["rule"], "isPromotion=1 & isWeekend=1");
    assert!(String::from_utf8_lossy(&out.stdout).contains("isPromotion=1 & isWeekend=1"));
}

#[test]
fn explain_top_limits_rows() {
    let dir = trained("400");
    let d = dir.path();
    let out = eblr(d, &["train", "-i", "synth.csv", "--calendar", "-o", "cal.json", "--curve", "cal.csv"]);
    assert_eq!(code(&out), 0);
    let out = eblr(d, &["explain", "--model", "cal.json", "--top", "3", "--report", "r.txt"]);
    assert_eq!(code(&out), 0);
    let rows = read(d, "importance.csv").lines().count() - 1;
    assert!((1..=3).contains(&rows), "{rows}");
    assert!(read(d, "r.txt").starts_with("intercept: "));
}

#[test]
fn explain_warns_on_model_without_rules() {
    let dir = trained("300");
    let d = dir.path();
    let mut model: serde_json::Value = serde_json::from_str(&read(d, "model.json")).unwrap();
    model["rules"] = serde_json::json!([]);
    model["iteration_log"] = serde_json::json!([]);
    let coefficients: Vec<serde_json::Value> = model["final_model"]["coefficients"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|c| !c["column"].as_str().unwrap().contains('&'))
        .cloned()
        .collect();
    model["final_model"]["coefficients"] = serde_json::Value::Array(coefficients);
    fs::write(d.join("bare.json"), serde_json::to_string(&model).unwrap()).unwrap();
    let out = eblr(d, &["explain", "--model", "bare.json"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(stderr(&out).contains("warning"));
    assert_eq!(read(d, "importance.csv"), "name,score\n");
}

#[test]
fn environment_sets_default_paths() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_eblr"))
        .current_dir(dir.path())
        .args(["synth", "--length", "30"])
        .env("EBLR_SYNTH_OUT", "from_env.csv")
        .output()
        .unwrap();
    assert_eq!(code(&out), 0);
    assert!(dir.path().join("from_env.csv").exists());
}

#[test]
fn single_thread_run_matches_default() {
    let dir = trained("300");
    let d = dir.path();
    let args = ["evaluate", "-i", "synth.csv", "--n-windows", "3", "--horizon", "14"];
    assert_eq!(code(&eblr(d, &args)), 0);
    let default_report = read(d, "report.json");
    let mut threaded = args.to_vec();
    threaded.extend(["--threads", "1", "--force"]);
    assert_eq!(code(&eblr(d, &threaded)), 0);
    assert_eq!(read(d, "report.json"), default_report);
}
