//! End-to-end recovery on a full-observation instance, printing the step
//! kinds the solver took and the distance to the truncated SVD.
//!
//! cargo run --example solve

use std::collections::BTreeMap;

use strict_saddle::experiment::gaussian_start;
use strict_saddle::linalg::truncated_svd;
use strict_saddle::{solve, synthetic_instance, InstanceSpec, ObjectiveHandle, ProblemKind, SolverConfig};

fn main() -> strict_saddle::Result<()> {
    let inst = synthetic_instance(&InstanceSpec::new(20, 20, 3, ProblemKind::Full).with_condition(3.0).with_seed(1))?;
    let h = ObjectiveHandle::new(inst.oracle(), 3)?;
    let w0 = gaussian_start(20, 20, 3, 1.0, 1);
    let cfg = SolverConfig { eps_g: 1e-6, eps_h: 1e-4, seed: 1, ..SolverConfig::default() };

    let (result, trace) = solve(&h, &w0, &cfg)?;
    let mut kinds = BTreeMap::new();
    for rec in &trace.records {
        *kinds.entry(rec.step_kind.as_str()).or_insert(0) += 1;
    }
    println!("termination: {:?} after {} outer iterations", result.termination_reason, result.outer_iters);
    println!("steps: {kinds:?}");
    println!(
        "γ: {:.3} → {:.3} ({} halvings), σ_r = {:.3}",
        result.gamma0,
        result.gamma_final,
        result.gamma_halvings,
        inst.sigma_r()
    );
    println!("‖∇G‖ = {:.2e}, surrogate = {:.2e}", result.grad_norm, result.surrogate);
    println!("G evaluations {}, Hessian-vector products {}", result.g_evals, result.hvp_evals);
    let err = (result.w_final.product() - truncated_svd(&inst.xstar, 3)).norm();
    println!("‖UVᵀ − M_r‖_F = {err:.2e}");
    println!("\nlast trace rows:");
    let csv = trace.to_csv();
    let lines: Vec<&str> = csv.lines().collect();
    println!("{}", lines[0]);
    for line in &lines[lines.len().saturating_sub(4)..] {
        println!("{line}");
    }
    Ok(())
}
