//! The three built-in losses: matrix completion, matrix sensing and full
//! observation. Each one is checked against a central difference.
//!
//! cargo run --example oracles

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use strict_saddle::linalg::{frob_dot, gaussian_matrix};
use strict_saddle::{synthetic_instance, InstanceSpec, ProblemKind};

fn main() -> strict_saddle::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for kind in [ProblemKind::Completion, ProblemKind::Sensing, ProblemKind::Full] {
        let inst = synthetic_instance(&InstanceSpec::new(10, 8, 2, kind).with_seed(5).with_density(0.6))?;
        let f = inst.oracle();
        let x = gaussian_matrix(10, 8, &mut rng);
        let t = gaussian_matrix(10, 8, &mut rng);
        let h = 1e-6;
        let fd = (f.f_value(&(&x + &t * h)) - f.f_value(&(&x - &t * h))) / (2.0 * h);
        let exact = frob_dot(&f.f_grad(&x), &t);
        let curv = frob_dot(&t, &f.f_hess_apply(&x, &t));
        println!(
            "{kind:>10}: f(X*) = {:.1e}  <∇f, T> = {exact:+.6}  fd = {fd:+.6}  <T, H[T]> = {curv:.4}  L = {}",
            f.f_value(&inst.xstar),
            f.lipschitz_grad()
        );
    }
    Ok(())
}
