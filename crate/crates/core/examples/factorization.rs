//! Balanced factorization of a rank-r matrix and Procrustes distance between
//! factor pairs.
//!
//! cargo run --example factorization

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use strict_saddle::factor::balance_identities_report;
use strict_saddle::linalg::{gaussian_matrix, random_orthogonal};
use strict_saddle::{balanced_factorization, factor_distance, FactorPair};

fn main() -> strict_saddle::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (n, m, r) = (8, 6, 2);
    let xstar = gaussian_matrix(n, r, &mut rng) * gaussian_matrix(m, r, &mut rng).transpose();

    let wstar = balanced_factorization(&xstar, r)?;
    let report = balance_identities_report(&wstar, &xstar);
    println!("‖Ŵ*ᵀW*‖_F            = {:.2e}", report.imbalance);
    println!("‖W*‖²  vs 2‖X*‖      rel. err {:.2e}", report.relative_spectral());
    println!("‖W*W*ᵀ‖_F vs 2‖X*‖_F rel. err {:.2e}", report.relative_frobenius());
    println!("‖UVᵀ − X*‖_F         = {:.2e}", (wstar.product() - &xstar).norm());

    // Every rotation of W* is an equally good factorization.
    let q = random_orthogonal(r, &mut rng);
    let rotated = wstar.rotate(&q);
    println!("dist(W*Q, W*)        = {:.2e}", factor_distance(&rotated, &wstar)?);

    let perturbed = FactorPair::new(&rotated.u + gaussian_matrix(n, r, &mut rng) * 0.1, rotated.v.clone())?;
    println!("dist(perturbed, W*)  = {:.4}", factor_distance(&perturbed, &wstar)?);
    println!("‖perturbed − W*‖_F   = {:.4} (no alignment)", (&perturbed - &wstar).norm());
    Ok(())
}
