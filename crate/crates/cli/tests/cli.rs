use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use edgesim::config::paper_fig4;
use edgesim::scenario::Deployment;
use edgesim::Scenario;

fn edgesim(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_edgesim"))
        .args(args)
        .current_dir(cwd)
        .env_remove("EDGESIM_SEED")
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).unwrap()
}

fn small_config(dir: &Path, n_sbs: usize, n_mue: usize) -> String {
    let mut cfg = paper_fig4();
    cfg.scenario.deployment = Deployment::Fixed {
        sbs_count: n_sbs,
        mue_count: n_mue,
    };
    let path = dir.join(format!("cfg{n_sbs}.json"));
    fs::write(&path, cfg.to_json().unwrap()).unwrap();
    path.to_str().unwrap().to_string()
}

fn preset_scenario(dir: &Path) -> String {
    ok(&edgesim(
        &["generate", "--preset", "paper-fig4", "-o", "s.json"],
        dir,
    ));
    "s.json".into()
}

#[test]
fn generate_preset_round_trips() {
    let tmp = tempfile::tempdir().unwrap();
    let out = ok(&edgesim(
        &["generate", "--preset", "paper-fig4", "-o", "s.json"],
        tmp.path(),
    ));
    assert!(out.contains("13 SBSs"));
    let text = fs::read_to_string(tmp.path().join("s.json")).unwrap();
    let s = Scenario::from_json(&text).unwrap();
    assert_eq!(s.num_sbs(), 13);
    assert_eq!(s.mues.len(), 52);
    assert_eq!(s.to_json().unwrap(), text);
}

#[test]
fn generate_without_config_is_a_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = edgesim(&["generate", "-o", "s.json"], tmp.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("--config"));
}

#[test]
fn bad_config_names_the_field() {
    let tmp = tempfile::tempdir().unwrap();
    let mut v: serde_json::Value = serde_json::from_str(&paper_fig4().to_json().unwrap()).unwrap();
    v["scenario"]["weights"]["w_c"] = "heavy".into();
    fs::write(tmp.path().join("bad.json"), v.to_string()).unwrap();
    let out = edgesim(&["generate", "--config", "bad.json", "-o", "s.json"], tmp.path());
    assert_eq!(out.status.code(), Some(1));
    let err = stderr(&out);
    assert!(err.starts_with("error: "), "{err}");
    assert_eq!(err.trim_end().lines().count(), 1, "{err}");
    assert!(err.contains("scenario.weights.w_c"), "{err}");
}

#[test]
fn seed_environment_variable_overrides_the_config() {
    let tmp = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_edgesim"))
        .args(["generate", "--preset", "paper-fig4", "-o", "s.json"])
        .current_dir(tmp.path())
        .env("EDGESIM_SEED", "42")
        .output()
        .unwrap();
    ok(&out);
    let s = Scenario::from_json(&fs::read_to_string(tmp.path().join("s.json")).unwrap()).unwrap();
    assert_eq!(s.seed, 42);
}

#[test]
fn noncooperative_run_has_no_risk() {
    let tmp = tempfile::tempdir().unwrap();
    let s = preset_scenario(tmp.path());
    ok(&edgesim(
        &["run", &s, "--scheme", "noncoop", "-o", "nc"],
        tmp.path(),
    ));
    let mut rdr = csv::Reader::from_path(tmp.path().join("nc/costs.csv")).unwrap();
    let headers = rdr.headers().unwrap().clone();
    let risk = headers.iter().position(|h| h == "risk").unwrap();
    let mut rows = 0;
    for rec in rdr.records() {
        assert_eq!(rec.unwrap()[risk].parse::<f64>().unwrap(), 0.0);
        rows += 1;
    }
    assert_eq!(rows, 13);
    assert!(!tmp.path().join("nc/trace.csv").exists());
}

#[test]
fn proposed_run_writes_every_report_and_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let s = preset_scenario(tmp.path());
    ok(&edgesim(&["run", &s, "-o", "a"], tmp.path()));
    ok(&edgesim(&["--jobs", "2", "run", &s, "-o", "b"], tmp.path()));
    for f in [
        "costs.csv",
        "ledger.csv",
        "trace.csv",
        "allocation.json",
        "summary.json",
    ] {
        let a = fs::read(tmp.path().join("a").join(f)).unwrap();
        let b = fs::read(tmp.path().join("b").join(f)).unwrap();
        assert_eq!(a, b, "{f} differs between runs");
    }
}

#[test]
fn unknown_scheme_is_a_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let s = preset_scenario(tmp.path());
    let out = edgesim(&["run", &s, "--scheme", "magic", "-o", "x"], tmp.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn central_beyond_the_cap_names_it() {
    let tmp = tempfile::tempdir().unwrap();
    let s = preset_scenario(tmp.path());
    let out = edgesim(&["run", &s, "--scheme", "central", "-o", "x"], tmp.path());
    assert_eq!(out.status.code(), Some(1));
    let err = stderr(&out);
    assert_eq!(err.trim_end().lines().count(), 1);
    assert!(err.contains("at most 10"), "{err}");
}

#[test]
fn verify_passes_then_catches_a_tampered_allocation() {
    let tmp = tempfile::tempdir().unwrap();
    let s = preset_scenario(tmp.path());
    ok(&edgesim(&["run", &s, "-o", "r"], tmp.path()));
    let out = ok(&edgesim(
        &["verify", &s, "--allocation", "r/allocation.json"],
        tmp.path(),
    ));
    assert!(out.contains("hp-stability: PASS"), "{out}");
    assert!(out.contains("allocation file: PASS"), "{out}");

    let path = tmp.path().join("r/allocation.json");
    let mut alloc: serde_json::Value = serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
    let clouds = alloc["cloud_flows"].as_object_mut().unwrap();
    let key = clouds.keys().next().unwrap().clone();
    let v = clouds[&key].as_f64().unwrap();
    clouds.insert(key, (v + 1.0).into());
    fs::write(tmp.path().join("tampered.json"), alloc.to_string()).unwrap();
    let out = edgesim(&["verify", &s, "--allocation", "tampered.json"], tmp.path());
    assert_eq!(out.status.code(), Some(1));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("allocation file: FAIL"), "{stdout}");
    assert!(stdout.contains("conservation"), "{stdout}");
}

#[test]
fn collective_mode_on_small_and_large_networks() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path(), 3, 12);
    ok(&edgesim(
        &["generate", "--config", &cfg, "--seed", "4", "-o", "s3.json"],
        tmp.path(),
    ));
    let out = ok(&edgesim(&["verify", "s3.json", "--mode", "all"], tmp.path()));
    assert!(out.contains("c-stability: "), "{out}");
    assert!(!out.contains("FAIL"), "{out}");

    let s = preset_scenario(tmp.path());
    let out = edgesim(&["verify", &s, "--mode", "c"], tmp.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("at most 8"));
}

fn sweep_spec(dir: &Path, cfg: &str, values: &str, replications: usize) -> String {
    let base: serde_json::Value = serde_json::from_str(&fs::read_to_string(cfg).unwrap()).unwrap();
    let spec = serde_json::json!({
        "name": "mue",
        "base": base,
        "axis": { "kind": "mue_count", "values": serde_json::from_str::<serde_json::Value>(values).unwrap() },
        "replications": replications,
    });
    let path = dir.join("spec.json");
    fs::write(&path, spec.to_string()).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn sweep_layout_resume_and_report() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path(), 5, 20);
    let spec = sweep_spec(tmp.path(), &cfg, "[10, 20]", 3);
    let out = ok(&edgesim(
        &["sweep", &spec, "-o", "results", "--run-id", "first"],
        tmp.path(),
    ));
    assert!(out.contains("6 cells (6 computed)"), "{out}");
    let dir = tmp.path().join("results/mue/first");
    for f in [
        "config.json",
        "table.csv",
        "trace.csv",
        "summary.json",
        "cells.jsonl",
    ] {
        assert!(dir.join(f).exists(), "missing {f}");
    }
    let table = fs::read_to_string(dir.join("table.csv")).unwrap();
    assert_eq!(table.lines().count(), 1 + 6);

    let out = ok(&edgesim(
        &["sweep", &spec, "-o", "results", "--resume"],
        tmp.path(),
    ));
    assert!(out.contains("(0 computed)"), "{out}");
    assert_eq!(fs::read_to_string(dir.join("table.csv")).unwrap(), table);

    let out = ok(&edgesim(&["report", "results/mue/first"], tmp.path()));
    assert!(out.contains("max gain"), "{out}");
    let summary = fs::read_to_string(dir.join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 1 + 2);
}

#[test]
fn single_cell_sweep_matches_run() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path(), 6, 24);
    let spec = sweep_spec(tmp.path(), &cfg, "[24]", 1);
    ok(&edgesim(
        &["sweep", &spec, "-o", "results", "--run-id", "one"],
        tmp.path(),
    ));
    ok(&edgesim(
        &["generate", "--config", &cfg, "-o", "s6.json"],
        tmp.path(),
    ));
    ok(&edgesim(&["run", "s6.json", "-o", "r6"], tmp.path()));

    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("r6/summary.json")).unwrap()).unwrap();
    let mut rdr = csv::Reader::from_path(tmp.path().join("results/mue/one/table.csv")).unwrap();
    let headers = rdr.headers().unwrap().clone();
    let col = headers.iter().position(|h| h == "utility_proposed").unwrap();
    let rec = rdr.records().next().unwrap().unwrap();
    let swept: f64 = rec[col].parse().unwrap();
    assert_eq!(swept, summary["total_utility"].as_f64().unwrap());
}

#[test]
fn dynamic_run_writes_one_row_per_slot() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path(), 5, 20);
    ok(&edgesim(
        &["dynamic", "--config", &cfg, "--slots", "6", "-o", "dyn"],
        tmp.path(),
    ));
    let text = fs::read_to_string(tmp.path().join("dyn/dynamic.csv")).unwrap();
    assert!(text.lines().count() > 6);
    assert!(tmp.path().join("dyn/series.json").exists());
}
