use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn afem(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_afem")).args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, name: &str, json: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, json).unwrap();
    path.to_str().unwrap().to_string()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn run_writes_history_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let cfg = write_config(
        dir.path(),
        "run.json",
        &format!(r#"{{"problem": "lshape", "eta_stop": 0.1, "record_exact_error": true, "measure_contraction": true, "dump_mesh": true, "output": {:?}}}"#, out),
    );
    let o = afem(&["run", "--config", &cfg]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));

    let summary = read_json(&out.join("summary.json"));
    assert_eq!(summary["termination"], "tolerance-met");
    assert!(summary["final_eta"].as_f64().unwrap() < 0.1);
    assert!(summary["q_alg"].as_f64().unwrap() < 1.0);
    assert!(summary["rates"]["slope_dofs"].as_f64().unwrap() < 0.0);

    let csv = fs::read_to_string(out.join("history.csv")).unwrap();
    let header = csv.lines().next().unwrap();
    assert!(header.starts_with("ell,k,j,dofs,eta,"));
    assert!(header.ends_with(",cum_cost,exact_error"));
    assert_eq!(csv.lines().count() - 1, summary["total_steps"].as_u64().unwrap() as usize);
    assert!(!fs::read_to_string(out.join("mesh.txt")).unwrap().is_empty());
}

#[test]
fn identical_configs_give_identical_histories() {
    let dir = tempfile::tempdir().unwrap();
    let mut csvs = Vec::new();
    for run in ["a", "b"] {
        let out = dir.path().join(run);
        let cfg = write_config(
            dir.path(),
            &format!("{run}.json"),
            &format!(r#"{{"problem": "zshape", "eta_stop": 0.1, "output": {:?}}}"#, out),
        );
        assert!(afem(&["run", "--config", &cfg]).status.success());
        csvs.push(fs::read(out.join("history.csv")).unwrap());
    }
    assert_eq!(csvs[0], csvs[1]);
}

#[test]
fn zarantonello_run_terminates() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let cfg = write_config(
        dir.path(),
        "z.json",
        &format!(r#"{{"problem": "zshape", "method": "zarantonello:0.648364", "eta_stop": 0.1, "output": {:?}}}"#, out),
    );
    assert!(afem(&["run", "--config", &cfg]).status.success());
    let summary = read_json(&out.join("summary.json"));
    assert_eq!(summary["method"], "zarantonello:0.648364");
    assert!(summary["final_eta"].as_f64().unwrap() < 0.1);
}

#[test]
fn bad_configs_fail_without_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    for (name, body) in [
        ("unknown_problem.json", format!(r#"{{"problem": "circle", "output": {:?}}}"#, out)),
        ("unknown_key.json", format!(r#"{{"problem": "lshape", "thetaa": 0.5, "output": {:?}}}"#, out)),
        ("bad_theta.json", format!(r#"{{"problem": "lshape", "theta": 0.0, "output": {:?}}}"#, out)),
        ("grid_in_run.json", format!(r#"{{"problem": "lshape", "sweep_theta": [0.5], "output": {:?}}}"#, out)),
    ] {
        let cfg = write_config(dir.path(), name, &body);
        let o = afem(&["run", "--config", &cfg]);
        assert!(!o.status.success(), "{name} should fail");
        assert!(!out.exists(), "{name} left artifacts");
    }
    assert!(!afem(&["run", "--config", "/nonexistent/config.json"]).status.success());
}

#[test]
fn step_cap_fails_but_keeps_history() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let cfg = write_config(
        dir.path(),
        "cap.json",
        &format!(r#"{{"problem": "lshape", "max_total_steps": 10, "output": {:?}}}"#, out),
    );
    assert!(!afem(&["run", "--config", &cfg]).status.success());
    let summary = read_json(&out.join("summary.json"));
    assert_eq!(summary["termination"], "step-cap");
    assert_eq!(summary["total_steps"], 10);
}

#[test]
fn sweep_grid_with_full_bulk_column() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let cfg = write_config(
        dir.path(),
        "sweep.json",
        &format!(
            r#"{{"problem": "lshape", "eta_stop": 0.15, "sweep_theta": [0.5, 1.0], "sweep_lambda_lin": [0.1, 0.9], "output": {:?}}}"#,
            out
        ),
    );
    let o = afem(&["sweep", "--config", &cfg]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(out.join("sweep.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows.len(), 3);
    assert!(rows.iter().all(|r| r.split(',').count() == 3));
    let summary = read_json(&out.join("sweep.json"));
    let cells = summary["cells"].as_array().unwrap();
    assert_eq!(cells.len(), 4);
    assert!(cells.iter().all(|c| c["error"].is_null() && c["metric"].as_f64().unwrap() > 0.0));
    assert_eq!(summary["row_minima"].as_array().unwrap().len(), 2);
    assert!(summary["best"].is_array());
}

#[test]
fn single_cell_sweep_matches_run() {
    let dir = tempfile::tempdir().unwrap();
    let (run_out, sweep_out) = (dir.path().join("run"), dir.path().join("sweep"));
    let run_cfg = write_config(
        dir.path(),
        "run.json",
        &format!(r#"{{"problem": "zshape", "eta_stop": 0.1, "theta": 0.4, "lambda_lin": 0.5, "output": {:?}}}"#, run_out),
    );
    let sweep_cfg = write_config(
        dir.path(),
        "sweep.json",
        &format!(
            r#"{{"problem": "zshape", "eta_stop": 0.1, "sweep_theta": [0.4], "sweep_lambda_lin": [0.5], "output": {:?}}}"#,
            sweep_out
        ),
    );
    assert!(afem(&["run", "--config", &run_cfg]).status.success());
    assert!(afem(&["sweep", "--config", &sweep_cfg]).status.success());
    let run = read_json(&run_out.join("summary.json"));
    let sweep = read_json(&sweep_out.join("sweep.json"));
    let cell = &sweep["cells"][0];
    assert_eq!(cell["final_eta"], run["final_eta"]);
    assert_eq!(cell["total_steps"], run["total_steps"]);
    let expected = run["final_eta"].as_f64().unwrap() * (run["cum_cost"].as_f64().unwrap()).sqrt();
    // serde_json's default float parser is not exactly round-trip
    assert!((cell["metric"].as_f64().unwrap() - expected).abs() <= 1e-14 * expected);
}

#[test]
fn verify_passes() {
    let o = afem(&["verify"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stdout));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.lines().count() >= 7);
    assert!(stdout.lines().all(|l| l.starts_with("PASS")));
}
