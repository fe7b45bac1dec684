//! End-to-end tests of the installed binary: subcommand behavior, exit
//! codes, and file outputs.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_sgdsched"))
}

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn tmp_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("sgdsched_cli_{tag}_{}", std::process::id()));
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

#[test]
fn schedule_dumps_warmup_shape() {
    let out = bin()
        .args(["schedule", "--config"])
        .arg(config("warmup_schedule.json"))
        .args(["--format", "csv"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    let mut etas = Vec::new();
    for line in text.lines().skip(1) {
        let eta: f64 = line.split(',').nth(1).unwrap().parse().unwrap();
        etas.push(eta);
    }
    // Warm-up: nondecreasing then nonincreasing.
    let peak = etas
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .unwrap()
        .0;
    assert!(etas[..peak].windows(2).all(|w| w[0] <= w[1]));
    assert!(etas[peak..].windows(2).all(|w| w[0] >= w[1]));
    // Batch column doubles per block up to the cap.
    let first: u64 = text.lines().nth(1).unwrap().split(',').nth(2).unwrap().parse().unwrap();
    assert_eq!(first, 8);
}

#[test]
fn bounds_reports_domination() {
    let out = bin()
        .args(["bounds", "--config"])
        .arg(config("case_ii.json"))
        .args(["--format", "json"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let report: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(report["b_dominated"], serde_json::json!(true));
    assert_eq!(report["v_dominated"], serde_json::json!(true));
    assert!(report["b_exact"].as_f64().unwrap() <= report["b_bound"].as_f64().unwrap());
}

#[test]
fn verify_passes_and_writes_report() {
    let dir = tmp_dir("verify");
    let out = bin()
        .args(["verify", "--config"])
        .arg(config("case_i.json"))
        .args(["--seeds", "5", "--jobs", "2", "--format", "json", "--out"])
        .arg(&dir)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(report["pass_exact"], serde_json::json!(true));
    assert_eq!(report["seeds"], serde_json::json!(5));
    // Files land under --out with a manifest.
    let verdict = fs::read_to_string(dir.join("verdict.json")).unwrap();
    assert!(verdict.contains("\"pass_exact\""));
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["files"][0], serde_json::json!("verdict.json"));
    fs::remove_dir_all(&dir).ok();
}

#[test]
fn run_writes_trace_csv() {
    let dir = tmp_dir("run");
    let out = bin()
        .args(["run", "--config"])
        .arg(config("case_iii.json"))
        .arg("--out")
        .arg(&dir)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    // File name embeds case tag and seed.
    let trace = fs::read_to_string(dir.join("trace_case_iii_seed42.csv")).unwrap();
    assert!(trace.starts_with("t,eta,b,grad_norm2,loss,subopt\n"));
    assert!(trace.lines().count() > 100);
    fs::remove_dir_all(&dir).ok();
}

#[test]
fn sweep_writes_combined_aggregate() {
    let dir = tmp_dir("sweep");
    let out = bin()
        .args(["sweep", "--config"])
        .arg(config("sweep_cases.json"))
        .args(["--seeds", "4", "--jobs", "2", "--out"])
        .arg(&dir)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let agg = fs::read_to_string(dir.join("aggregate.csv")).unwrap();
    assert!(agg.starts_with("plan,t,mean,se\n"));
    assert!(agg.contains("constant-lr,"));
    assert!(agg.contains("cosine-lr,"));
    assert!(agg.contains("joint-growth,"));
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap();
    assert!(manifest["files"]
        .as_array()
        .unwrap()
        .contains(&serde_json::json!("aggregate.csv")));
    fs::remove_dir_all(&dir).ok();
}

#[test]
fn enumerate_reports_exact_moments() {
    let out = bin()
        .args(["enumerate", "--config"])
        .arg(config("case_i.json"))
        .args(["--batch", "2", "--format", "json"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert!(v["max_mean_abs_error"].as_f64().unwrap() < 1e-12);
    let exact = v["variance"].as_f64().unwrap();
    let expected = v["sigma2_over_b"].as_f64().unwrap();
    assert!((exact - expected).abs() <= 1e-12 * expected);
}

#[test]
fn constants_prints_certificate() {
    let out = bin()
        .args(["constants", "--config"])
        .arg(config("case_i.json"))
        .args(["--format", "json"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let cert: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(cert["l_bar"], serde_json::json!(1.0));
    assert_eq!(cert["sigma2_flag"], serde_json::json!("exact"));
    assert!(cert["sigma2"].as_f64().unwrap() > 0.0);
}

#[test]
fn missing_config_exits_2() {
    let out = bin()
        .args(["verify", "--config", "/nonexistent/nope.json"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn malformed_config_exits_2_with_line_anchor() {
    let dir = tmp_dir("badcfg");
    let path = dir.join("broken.json");
    fs::write(&path, "{ \"spec_version\": 1, \"name\": oops }").unwrap();
    let out = bin().args(["bounds", "--config"]).arg(&path).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line"), "no line anchor in: {err}");
    assert!(err.contains("broken.json"));
    fs::remove_dir_all(&dir).ok();
}

#[test]
fn unknown_flag_exits_2() {
    let out = bin().args(["verify", "--bogus"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn env_master_seed_fallback_matches_explicit_seed() {
    // A config without master_seed takes the seed from SCHED_BOUND_SEED.
    let dir = tmp_dir("envseed");
    let text = fs::read_to_string(config("case_i.json"))
        .unwrap()
        .replace("\"master_seed\": 42, ", "");
    let path = dir.join("no_seed.json");
    fs::write(&path, text).unwrap();

    let explicit = bin()
        .args(["run", "--config"])
        .arg(&path)
        .args(["--seed", "5"])
        .output()
        .unwrap();
    let via_env = bin()
        .args(["run", "--config"])
        .arg(&path)
        .env("SCHED_BOUND_SEED", "5")
        .output()
        .unwrap();
    assert_eq!(explicit.status.code(), Some(0));
    assert_eq!(via_env.status.code(), Some(0));
    assert_eq!(stdout(&explicit), stdout(&via_env));
    fs::remove_dir_all(&dir).ok();
}
