//! The randomized Lanczos minimum-eigenvalue oracle, on an explicit matrix
//! and on the matrix-free Hessian at a saddle point.
//!
//! cargo run --example eigen_oracle

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use strict_saddle::meo::DEFAULT_RHO;
use strict_saddle::{min_eig_oracle, synthetic_instance, InstanceSpec, MeoOutcome, ObjectiveHandle, ProblemKind};

fn describe(outcome: &MeoOutcome) -> String {
    match outcome {
        MeoOutcome::NegativeCurvature { lambda, .. } => format!("negative curvature, sᵀHs = {lambda:.4}"),
        MeoOutcome::Certificate { epsilon } => format!("certificate λ_min ≥ −{epsilon}"),
    }
}

fn main() -> strict_saddle::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);

    let mut spectrum = vec![1.0; 200];
    spectrum[0] = -0.3;
    let a = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(spectrum));
    for eps in [0.1, 0.5] {
        let report = min_eig_oracle(&a, eps, Some(1.0), DEFAULT_RHO, &mut rng)?;
        println!(
            "diag(−0.3, 1, …), ε = {eps}: {} after {} of at most {} iterations",
            describe(&report.outcome),
            report.iterations,
            report.budget.cap
        );
    }

    let inst = synthetic_instance(&InstanceSpec::new(15, 12, 3, ProblemKind::Full).with_seed(4))?;
    let h = ObjectiveHandle::new(inst.oracle(), 3)?;
    let zero = h.zeros();
    let op = h.hessian_operator(&zero)?;
    let report = min_eig_oracle(&op, 0.1, None, DEFAULT_RHO, &mut rng)?;
    println!(
        "Hessian at W = 0: {} ({} iterations, {} spent estimating M = {:.3}); σ₁(X*) = {:.4}",
        describe(&report.outcome),
        report.iterations,
        report.norm_estimate_iterations,
        report.budget.m_used,
        inst.sigma_1()
    );
    println!("Hessian-vector products counted: {}", h.hvp_evals());
    Ok(())
}
