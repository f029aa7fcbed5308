//! Starting exactly at the saddle `W = 0`, where the gradient vanishes, the
//! solver must find negative curvature to make progress.
//!
//! cargo run --example saddle_escape

use strict_saddle::{solve, synthetic_instance, InstanceSpec, ObjectiveHandle, ProblemKind, SolverConfig};

fn main() -> strict_saddle::Result<()> {
    let inst = synthetic_instance(&InstanceSpec::new(12, 10, 2, ProblemKind::Full).with_condition(2.0).with_seed(6))?;
    let h = ObjectiveHandle::new(inst.oracle(), 2)?;
    let cfg = SolverConfig { seed: 6, ..SolverConfig::default() };
    let (result, trace) = solve(&h, &h.zeros(), &cfg)?;
    for rec in trace.records.iter().take(6) {
        println!(
            "k={:<3} {:<13} G = {:.5}  ‖∇G‖ = {:.2e}  λ = {}",
            rec.k,
            rec.step_kind.as_str(),
            rec.g_value,
            rec.grad_norm,
            rec.lambda.map_or("-".to_string(), |l| format!("{l:.4}"))
        );
    }
    println!("… converged = {} after {} outer iterations", result.converged, result.outer_iters);
    Ok(())
}
