//! File-driven workflow: generate a problem JSON, run an experiment file,
//! and read back the trace CSV and result JSON.
//!
//! cargo run --example experiment [output-dir]

use std::fs;
use std::path::PathBuf;

use strict_saddle::experiment::{generate, run_experiment, GenConfig};

fn main() -> strict_saddle::Result<()> {
    let dir =
        std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("saddle-experiment"));
    fs::create_dir_all(&dir)?;

    let gen = GenConfig::from_json(r#"{"kind": "completion", "n": 30, "m": 25, "r": 2, "density": 0.6, "seed": 8}"#)?;
    fs::write(dir.join("problem.json"), generate(&gen)?.to_json()?)?;
    fs::write(dir.join("config.json"), r#"{"eps_g": 1e-6, "eps_H": 1e-4, "init_scale": 0.5}"#)?;
    fs::write(
        dir.join("experiment.json"),
        r#"{"problem": "problem.json", "config": "config.json", "seed": 42,
            "trace": "trace.csv", "out": "result.json", "diagnostics": "diagnostics.json"}"#,
    )?;

    let code = run_experiment(&dir.join("experiment.json"))?;
    println!("exit code {code}; artifacts in {}", dir.display());
    let trace = fs::read_to_string(dir.join("trace.csv"))?;
    println!("trace has {} rows", trace.lines().count() - 1);
    let result: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.join("result.json"))?)?;
    println!("converged = {}, grad_norm = {}", result["converged"], result["grad_norm"]);
    Ok(())
}
