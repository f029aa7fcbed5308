//! Local-phase work as the tolerance tightens: the count grows roughly
//! linearly in log(1/ε).
//!
//! cargo run --release --example tolerance_scaling

use strict_saddle::experiment::gaussian_start;
use strict_saddle::{solve, synthetic_instance, InstanceSpec, ObjectiveHandle, ProblemKind, SolverConfig};

fn main() -> strict_saddle::Result<()> {
    let inst = synthetic_instance(&InstanceSpec::new(20, 20, 3, ProblemKind::Full).with_condition(3.0).with_seed(0))?;
    let h = ObjectiveHandle::new(inst.oracle(), 3)?;
    let w0 = gaussian_start(20, 20, 3, 1.0, 1000);
    // A large γ₀ makes the local phase conservative enough that it, rather
    // than the gradient steps, does the final descent.
    let gamma0 = 1e5 * inst.sigma_r();
    for eps in [1e-3, 1e-6, 1e-9] {
        let cfg = SolverConfig { eps_g: eps, eps_h: eps, gamma0: Some(gamma0), ..SolverConfig::default() };
        let (result, _) = solve(&h, &w0, &cfg)?;
        println!(
            "ε = {eps:.0e}: converged = {}, local iterations = {}, log(1/ε) = {:.2}",
            result.converged,
            result.total_inner_iters,
            (1.0 / eps).ln()
        );
    }
    Ok(())
}
