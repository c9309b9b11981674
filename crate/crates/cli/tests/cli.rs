use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn finpop(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_finpop"))
        .args(args)
        .env_remove("FINPOP_THREADS")
        .output()
        .expect("binary runs")
}

fn stdout_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!("stdout is not JSON ({e}): {}", String::from_utf8_lossy(&out.stdout))
    })
}

fn stderr_error(out: &Output) -> Value {
    let v: Value = serde_json::from_slice(&out.stderr).expect("stderr carries a JSON error");
    v["error"].clone()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn fixed_size_golden() {
    let out = finpop(&["fixed-size", "--eps-a", "0.02", "--eps-r", "0.1", "--delta", "0.05"]);
    assert_eq!(out.status.code(), Some(0));
    let v = stdout_json(&out);
    assert_eq!(v["n_formula"], 3023);
    let bound = v["n_bound"].as_f64().unwrap();
    assert!((bound - 3022.806147249624).abs() < 1e-8);
}

#[test]
fn fixed_size_caps_at_population() {
    let out = finpop(&["fixed-size", "--eps-a", "0.1", "--eps-r", "0.4", "--delta", "0.2", "--population", "50"]);
    assert_eq!(out.status.code(), Some(0));
    let v = stdout_json(&out);
    assert_eq!(v["n_effective"], 50);
    assert!(v["note"].is_string());
}

#[test]
fn missing_flag_is_a_usage_error() {
    let out = finpop(&["fixed-size", "--eps-a", "0.02", "--delta", "0.05"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_error(&out)["kind"], "usage");
}

#[test]
fn inadmissible_margins_are_rejected() {
    let out = finpop(&["fixed-size", "--eps-a", "0.3", "--eps-r", "0.4", "--delta", "0.05"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_error(&out)["kind"], "inadmissible");
}

#[test]
fn inverse_thresholds() {
    let out = finpop(&["inverse", "--eps", "0.1", "--delta", "0.05", "--exact-root"]);
    assert_eq!(out.status.code(), Some(0));
    let v = stdout_json(&out);
    assert_eq!(v["r_formula"], 839);
    let exact = v["r_exact_int"].as_u64().unwrap();
    assert!(exact <= 839);
    assert!(v["bound_at_r_exact"].as_f64().unwrap() <= 0.05);
    assert!(v["bound_below_r_exact"].as_f64().unwrap() > 0.05);
}

#[test]
fn out_of_range_eps_is_a_domain_error() {
    let out = finpop(&["inverse", "--eps", "1.5", "--delta", "0.05"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_error(&out)["kind"], "domain");
}

#[test]
fn plan_verify_run_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let plan = dir.path().join("plan.json");
    let report = dir.path().join("report.json");
    let out = finpop(&[
        "multistage", "plan", "--population", "300", "--eps", "0.1", "--delta", "0.1",
        "--out", plan.to_str().unwrap(), "--report", report.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let rep = read_json(&report);
    assert_eq!(rep["certified"], true);
    assert_eq!(rep["normalized"], true);
    assert!(rep["worst_two_d2"].as_f64().unwrap() < 0.1);

    let out = finpop(&["multistage", "verify", "--plan", plan.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let v = stdout_json(&out);
    assert_eq!(v["certified"], true);
    assert_eq!(v["per_m"].as_array().unwrap().len(), 301);

    let out = finpop(&["multistage", "run", "--plan", plan.to_str().unwrap(), "--m", "90", "--seed", "4"]);
    assert_eq!(out.status.code(), Some(0));
    let v = stdout_json(&out);
    assert!(v["width"].as_f64().unwrap() <= 0.2 + 1e-12);

    let out = finpop(&["multistage", "run", "--plan", plan.to_str().unwrap(), "--m", "90", "--trials", "500"]);
    assert_eq!(out.status.code(), Some(0));
    let v = stdout_json(&out);
    assert!(v["max_width"].as_u64().unwrap() <= v["width_limit"].as_u64().unwrap());

    let out = finpop(&[
        "multistage", "verify", "--plan", plan.to_str().unwrap(), "--mc", "2000", "--m", "150", "--seed", "11",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let v = stdout_json(&out);
    assert_eq!(v["rows"].as_array().unwrap().len(), 1);

    let out = finpop(&["--format", "csv", "multistage", "verify", "--plan", plan.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("m,two_d2,coverage,stages_used"));
    assert_eq!(text.lines().count(), 302);
}

#[test]
fn uncertifiable_instance_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let plan = dir.path().join("plan.json");
    let out = finpop(&[
        "multistage", "plan", "--population", "200", "--eps", "0.1", "--delta", "0.1",
        "--out", plan.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let err = stderr_error(&out);
    assert_eq!(err["kind"], "not_certified");
    assert!(err["details"]["worst_two_d2"].as_f64().unwrap() >= 0.1);
}

#[test]
fn invalid_plan_file() {
    let dir = tempfile::tempdir().unwrap();
    let plan = dir.path().join("plan.json");
    std::fs::write(&plan, "{\"schema_version\": 1}").unwrap();
    let out = finpop(&["multistage", "verify", "--plan", plan.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_error(&out)["kind"], "invalid_plan");
}

#[test]
fn simulations_agree_with_exact_values() {
    let dir = tempfile::tempdir().unwrap();
    let dump = dir.path().join("trials.csv");
    let out = finpop(&[
        "simulate", "fixed-size", "--population", "500", "--m", "120", "--n", "94", "--eps-a", "0.1",
        "--eps-r", "0.4", "--delta", "0.2", "--trials", "4000", "--seed", "5", "--dump", dump.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let v = stdout_json(&out);
    assert_eq!(v["within_3se"], true);
    assert_eq!(std::fs::read_to_string(&dump).unwrap().lines().count(), 4001);

    let out = finpop(&[
        "simulate", "inverse", "--population", "400", "--m", "100", "--r", "20", "--eps", "0.3", "--delta", "0.1",
        "--trials", "4000", "--seed", "6",
    ]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(stdout_json(&out)["within_3se"], true);
}

#[test]
fn thread_count_does_not_change_results() {
    let args = [
        "simulate", "inverse", "--population", "100", "--m", "30", "--r", "5", "--eps", "0.3", "--delta", "0.1",
        "--trials", "3000", "--seed", "9",
    ];
    let one = finpop(&[&["--threads", "1"], &args[..]].concat());
    let two = finpop(&[&["--threads", "2"], &args[..]].concat());
    assert_eq!(one.stdout, two.stdout);
}

#[test]
fn help_exits_zero() {
    assert_eq!(finpop(&["--help"]).status.code(), Some(0));
    assert_eq!(finpop(&["--version"]).status.code(), Some(0));
}
