use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn saddle(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_saddle")).args(args).current_dir(dir).output().unwrap()
}

fn gen_problem(dir: &Path, kind: &str) {
    let out =
        saddle(&["gen", "--kind", kind, "--n", "14", "--m", "12", "--r", "2", "--seed", "5", "--out", "p.json"], dir);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn solve_writes_a_converged_result() {
    let dir = tempfile::tempdir().unwrap();
    for kind in ["full", "completion", "sensing"] {
        gen_problem(dir.path(), kind);
        fs::write(dir.path().join("c.json"), r#"{"eps_g": 1e-6, "eps_H": 1e-4}"#).unwrap();
        let out = saddle(
            &[
                "solve",
                "--problem",
                "p.json",
                "--config",
                "c.json",
                "--trace",
                "t.csv",
                "--seed",
                "3",
                "--out",
                "r.json",
            ],
            dir.path(),
        );
        assert_eq!(out.status.code(), Some(0), "{kind}: {}", String::from_utf8_lossy(&out.stderr));
        let result: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("r.json")).unwrap()).unwrap();
        assert_eq!(result["converged"], true);
        assert_eq!(result["termination_reason"], "converged");
        assert!(result["grad_norm"].as_f64().unwrap() <= 1e-6);
        assert_eq!(result["W_final"]["U"].as_array().unwrap().len(), 14);
        let trace = fs::read_to_string(dir.path().join("t.csv")).unwrap();
        assert!(trace.starts_with("k,step_kind,gamma_k,grad_norm,G_value,nu,backtracks,T_k,surrogate,wall_ms\n"));
        assert!(trace.trim_end().lines().last().unwrap().contains(",terminated,"));
    }
}

#[test]
fn solve_is_reproducible_and_seed_sensitive() {
    let dir = tempfile::tempdir().unwrap();
    gen_problem(dir.path(), "completion");
    fs::write(dir.path().join("c.json"), r#"{"init_scale": 0.0}"#).unwrap();
    let run = |seed: &str, trace: &str| {
        let out = saddle(
            &["solve", "--problem", "p.json", "--config", "c.json", "--trace", trace, "--seed", seed],
            dir.path(),
        );
        assert!(out.status.success());
        (fs::read(dir.path().join(trace)).unwrap(), out.stdout)
    };
    let a = run("42", "a.csv");
    let b = run("42", "b.csv");
    let c = run("7", "c.csv");
    assert_eq!(a, b);
    assert_ne!(a.0, c.0);
}

#[test]
fn missing_kind_is_named() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("p.json"), r#"{"n": 3, "m": 3, "r": 1, "dense": [[1,0,0],[0,0,0],[0,0,0]]}"#).unwrap();
    let out = saddle(&["solve", "--problem", "p.json"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("kind"));
}

#[test]
fn bad_config_field_is_named() {
    let dir = tempfile::tempdir().unwrap();
    gen_problem(dir.path(), "full");
    fs::write(dir.path().join("c.json"), r#"{"eps_g": -1.0}"#).unwrap();
    let out = saddle(&["solve", "--problem", "p.json", "--config", "c.json"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("eps_g"));

    fs::write(dir.path().join("c.json"), r#"{"step_size": 1.0}"#).unwrap();
    let out = saddle(&["solve", "--problem", "p.json", "--config", "c.json"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("step_size"));

    let out = saddle(&["solve", "--problem", "missing.json"], dir.path());
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn exhausted_budget_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    gen_problem(dir.path(), "full");
    fs::write(dir.path().join("c.json"), r#"{"max_outer": 2, "init_scale": 3.0}"#).unwrap();
    let out = saddle(&["solve", "--problem", "p.json", "--config", "c.json"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let result: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(result["termination_reason"], "budget_exhausted");
    assert_eq!(result["converged"], false);
}

#[test]
fn diagnose_and_budgets_reports() {
    let dir = tempfile::tempdir().unwrap();
    gen_problem(dir.path(), "full");
    let out = saddle(&["diagnose", "--problem", "p.json", "--samples", "30", "--out", "d.json"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let d: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("d.json")).unwrap()).unwrap();
    for region in ["R1", "R2", "R3p", "R3pp", "R3ppp"] {
        assert_eq!(d["region_audit"]["regions"][region]["violations"], 0, "{region}");
    }
    assert_eq!(d["hessian_lower_bound"]["failures"], 0);
    assert_eq!(d["distance_bound"]["failures"], 0);

    let out = saddle(&["budgets", "--problem", "p.json"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let b: Value = serde_json::from_slice(&out.stdout).unwrap();
    let sum = b["K_large"].as_f64().unwrap() + b["K_local"].as_f64().unwrap();
    assert!((b["K_outer"].as_f64().unwrap() - sum).abs() <= 1e-12 * sum);
    assert!(b["N_meo_cap"].as_u64().unwrap() <= 52);
    assert_eq!(b["inputs"]["G_low"], 0.0);

    gen_problem(dir.path(), "completion");
    let out = saddle(&["diagnose", "--problem", "p.json", "--samples", "10"], dir.path());
    assert!(out.status.success());
    let d: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(d["region_audit"].is_null());
    assert!(!d["notes"].as_array().unwrap().is_empty());
}

#[test]
fn gen_accepts_a_config_file() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("g.json"),
        r#"{"kind": "sensing", "n": 6, "m": 5, "r": 1, "density": 0.8, "sigma_min": 2.0, "seed": 1}"#,
    )
    .unwrap();
    let out = saddle(&["gen", "--config", "g.json"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let p: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(p["kind"], "sensing");
    assert_eq!(p["measurements"]["matrices"].as_array().unwrap().len(), 24);

    let out = saddle(&["gen", "--n", "4"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("kind"));
}

#[test]
fn run_executes_an_experiment_file() {
    let dir = tempfile::tempdir().unwrap();
    gen_problem(dir.path(), "full");
    fs::write(
        dir.path().join("e.json"),
        r#"{"problem": "p.json", "seed": 1, "trace": "t.csv", "out": "r.json", "diagnostics": "d.json"}"#,
    )
    .unwrap();
    let out = saddle(&["run", "--config", "e.json"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    for file in ["t.csv", "r.json", "d.json"] {
        assert!(dir.path().join(file).exists(), "{file}");
    }
}
