//! Theoretical iteration and oracle-call budgets, evaluated from smoothness
//! constants measured along an actual run, next to the observed counts.
//!
//! cargo run --example budgets

use strict_saddle::experiment::{measured_budgets, RunConfig};
use strict_saddle::problem::ProblemFile;
use strict_saddle::{synthetic_instance, InstanceSpec, ProblemKind};

fn main() -> strict_saddle::Result<()> {
    let spec = InstanceSpec::new(15, 15, 2, ProblemKind::Full).with_condition(2.0).with_seed(3);
    let problem = ProblemFile::from_synthetic(&spec, &synthetic_instance(&spec)?).build()?;
    let cfg = RunConfig::from_json(r#"{"eps_g": 1e-6, "eps_H": 1e-4, "seed": 3}"#)?;
    let (report, run) = measured_budgets(&problem, &cfg)?;

    let i = &report.inputs;
    println!("measured: L_g = {:.3}, L_H = {:.3}, R_L = {:.3}, M = {:.3}", i.l_g, i.l_h, i.r_l, i.u_h);
    println!("ν_min = {:.4}, Ĉ = {:.3e}", report.nu_min, report.c_hat);
    println!("outer iterations: observed {:>6}, bound {:.3e}", run.result.outer_iters, report.k_outer);
    let max_local =
        run.trace.iter_kind(strict_saddle::solver::StepKind::LocalEntered).map(|r| r.t_k).max().unwrap_or(0);
    println!("local steps/call: observed {max_local:>6}, bound {:.1}", report.t_cap);
    println!("Lanczos cap N_meo = {}", report.n_meo_cap);
    println!("oracle calls bound = {:.3e}", report.oracle_calls);
    Ok(())
}
