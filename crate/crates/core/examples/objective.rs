//! Value, gradient and Hessian action of the balanced objective
//! `G(W) = f(UVᵀ) + ⅛‖UᵀU − VᵀV‖²_F`, compared with the dense Hessian.
//!
//! cargo run --example objective

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use strict_saddle::diagnostics::{dense_hessian, dense_min_eig, GroundTruth};
use strict_saddle::linalg::gaussian_matrix;
use strict_saddle::{synthetic_instance, FactorPair, InstanceSpec, ObjectiveHandle, ProblemKind};

fn main() -> strict_saddle::Result<()> {
    let inst = synthetic_instance(&InstanceSpec::new(6, 5, 2, ProblemKind::Full).with_condition(2.0).with_seed(2))?;
    let h = ObjectiveHandle::new(inst.oracle(), 2)?;
    let gt = GroundTruth::from_instance(&inst)?;
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let w = FactorPair::new(gaussian_matrix(6, 2, &mut rng), gaussian_matrix(5, 2, &mut rng))?;
    let d = FactorPair::new(gaussian_matrix(6, 2, &mut rng), gaussian_matrix(5, 2, &mut rng))?;

    let step = 1e-6;
    let fd = (h.g_value(&w.axpy(step, &d))? - h.g_value(&w.axpy(-step, &d))?) / (2.0 * step);
    println!("G(W) = {:.6}", h.g_value(&w)?);
    println!("<∇G, D> = {:+.8}  central difference = {fd:+.8}", h.g_grad(&w)?.dot(&d));

    let hd = h.g_hess_apply(&w, &d)?;
    let fd_h = (&h.g_grad(&w.axpy(step, &d))? - &h.g_grad(&w.axpy(-step, &d))?).scale(0.5 / step);
    println!("‖∇²G[D] − fd‖ / ‖D‖ = {:.2e}", (&hd - &fd_h).norm() / d.norm());

    let dense = dense_hessian(&h, &w)?;
    println!("dense Hessian {}×{}, asymmetry {:.1e}", dense.matrix.nrows(), dense.matrix.ncols(), dense.asymmetry);
    let (lambda, _) = dense_min_eig(&h, &w)?;
    println!("λ_min(∇²G(W)) = {lambda:.4} ≥ −surrogate = {:.4}", -h.hessian_lower_bound_surrogate(&w)?);
    let (lambda_star, _) = dense_min_eig(&h, &gt.wstar)?;
    println!("λ_min(∇²G(W*)) = {lambda_star:.2e} (global minimizer)");
    let (lambda_zero, _) = dense_min_eig(&h, &h.zeros())?;
    println!("λ_min(∇²G(0)) = {lambda_zero:.4} (saddle), −σ₁ = {:.4}", -inst.sigma_1());
    Ok(())
}
