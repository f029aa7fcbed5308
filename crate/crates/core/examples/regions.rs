//! Classify points into the strict-saddle regions and audit the inequality
//! each region promises, using the dense Hessian where needed.
//!
//! cargo run --example regions

use strict_saddle::diagnostics::{
    classify_region, region_measures, verify_lemma3, verify_lemma4_bound, verify_region_inequalities, GroundTruth,
};
use strict_saddle::solver::Constants;
use strict_saddle::{synthetic_instance, InstanceSpec, ProblemKind};

fn main() -> strict_saddle::Result<()> {
    let inst = synthetic_instance(&InstanceSpec::new(12, 12, 2, ProblemKind::Full).with_condition(2.0).with_seed(0))?;
    let gt = GroundTruth::from_instance(&inst)?;
    let h = gt.full_observation_handle()?;

    for (name, w) in [("W*", gt.wstar.clone()), ("0", h.zeros()), ("3W*", gt.wstar.scale(3.0))] {
        let label = classify_region(&w, &gt)?;
        let m = region_measures(&w, &gt)?;
        println!("{name:>4}: {label:?}  dist = {:.3}", m.dist);
        println!(
            "      surrogate bound holds: {}, distance bound holds: {}",
            verify_lemma3(&h, &w, 1e-8)?.holds,
            verify_lemma4_bound(&h, &w, &gt)?
        );
    }

    let audit = verify_region_inequalities(&gt, 100, 7, &Constants::default())?;
    println!("\nregion  populated  attempts  violations  worst lhs/rhs");
    for (name, t) in &audit.regions {
        println!("{name:<7} {:>9}  {:>8}  {:>10}  {:.3}", t.populated, t.attempts, t.violations, t.worst_ratio);
    }
    println!("total violations: {}", audit.total_violations());
    Ok(())
}
