//! The balanced objective `G(W) = f(UVᵀ) + ⅛‖UᵀU − VᵀV‖²_F`, its gradient,
//! and its Hessian as a matrix-free operator on `(n+m)×r` directions.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Result, SaddleError};
use crate::factor::{Direction, FactorPair};
use crate::linalg::frob_dot;
use crate::meo::SymmetricOperator;
use crate::problem::ProblemOracle;

/// A problem oracle bound to a factor rank, with evaluation counters.
///
/// Evaluations are pure; the counters use relaxed atomics so a handle can be
/// shared across threads.
#[derive(Debug)]
pub struct ObjectiveHandle {
    oracle: Arc<dyn ProblemOracle>,
    n: usize,
    m: usize,
    r: usize,
    g_evals: AtomicU64,
    hvp_evals: AtomicU64,
}

impl ObjectiveHandle {
    pub fn new(oracle: Arc<dyn ProblemOracle>, r: usize) -> Result<Self> {
        let (n, m) = oracle.dims();
        if r == 0 {
            return Err(SaddleError::InvalidArgument("rank must be positive".into()));
        }
        Ok(Self { oracle, n, m, r, g_evals: AtomicU64::new(0), hvp_evals: AtomicU64::new(0) })
    }

    pub fn oracle(&self) -> &Arc<dyn ProblemOracle> {
        &self.oracle
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.n, self.m, self.r)
    }

    /// `N = (n + m) r`.
    pub fn unrolled_dim(&self) -> usize {
        (self.n + self.m) * self.r
    }

    pub fn lipschitz_grad_f(&self) -> f64 {
        self.oracle.lipschitz_grad()
    }

    pub fn g_evals(&self) -> u64 {
        self.g_evals.load(Ordering::Relaxed)
    }

    pub fn hvp_evals(&self) -> u64 {
        self.hvp_evals.load(Ordering::Relaxed)
    }

    pub fn reset_counters(&self) {
        self.g_evals.store(0, Ordering::Relaxed);
        self.hvp_evals.store(0, Ordering::Relaxed);
    }

    fn check(&self, w: &FactorPair, what: &str) -> Result<()> {
        if w.u.shape() == (self.n, self.r) && w.v.shape() == (self.m, self.r) {
            Ok(())
        } else {
            Err(SaddleError::ShapeMismatch(format!(
                "{what}: expected U {}×{} / V {}×{}, got U {:?} / V {:?}",
                self.n,
                self.r,
                self.m,
                self.r,
                w.u.shape(),
                w.v.shape()
            )))
        }
    }

    pub fn zeros(&self) -> FactorPair {
        FactorPair::zeros(self.n, self.m, self.r)
    }

    /// `G(W) = f(UVᵀ) + ⅛‖ŴᵀW‖²_F`.
    pub fn g_value(&self, w: &FactorPair) -> Result<f64> {
        self.check(w, "g_value")?;
        let f = self.oracle.f_value(&w.product());
        Ok(f + 0.125 * w.hat_gram().norm_squared())
    }

    /// Value, gradient and surrogate ingredients at `W` from one evaluation
    /// of `∇f`. Counts as one gradient evaluation.
    pub fn evaluate(&self, w: &FactorPair) -> Result<PointEval> {
        self.check(w, "evaluate")?;
        self.g_evals.fetch_add(1, Ordering::Relaxed);
        let x = w.product();
        let grad_f = self.oracle.f_grad(&x);
        let imbalance = w.hat_gram();
        let value = self.oracle.f_value(&x) + 0.125 * imbalance.norm_squared();
        let half_b = &imbalance * 0.5;
        let grad = FactorPair { u: &grad_f * &w.v + &w.u * &half_b, v: grad_f.transpose() * &w.u - &w.v * &half_b };
        let eval = PointEval {
            value,
            grad_norm: grad.norm(),
            grad,
            grad_f_norm: grad_f.norm(),
            imbalance_norm: imbalance.norm(),
            w_norm: w.norm(),
            w: w.clone(),
        };
        if !eval.value.is_finite() || !eval.grad_norm.is_finite() {
            return Err(SaddleError::NumericalFailure("objective or gradient is not finite".into()));
        }
        Ok(eval)
    }

    /// `∇G(W) = [∇f(X)V; ∇f(X)ᵀU] + ½ŴŴᵀW`.
    pub fn g_grad(&self, w: &FactorPair) -> Result<FactorPair> {
        self.check(w, "g_grad")?;
        self.g_evals.fetch_add(1, Ordering::Relaxed);
        let grad_f = self.oracle.f_grad(&w.product());
        let imbalance = w.hat_gram();
        let half_b = imbalance * 0.5;
        Ok(FactorPair { u: &grad_f * &w.v + &w.u * &half_b, v: grad_f.transpose() * &w.u - &w.v * &half_b })
    }

    /// `[∇²G(W)](D, D)` evaluated from the closed-form bilinear expression.
    pub fn g_hess_bilinear(&self, w: &FactorPair, d: &Direction) -> Result<f64> {
        self.check(w, "g_hess_bilinear (W)")?;
        self.check(d, "g_hess_bilinear (D)")?;
        let x = w.product();
        let delta = &d.u * w.v.transpose() + &w.u * d.v.transpose();
        let grad_f = self.oracle.f_grad(&x);
        let curvature_f = frob_dot(&delta, &self.oracle.f_hess_apply(&x, &delta));
        let cross = 2.0 * frob_dot(&grad_f, &(&d.u * d.v.transpose()));
        let imbalance = w.hat_gram();
        let d_hat_d = d.u.transpose() * &d.u - d.v.transpose() * &d.v;
        let hat_w_d = w.u.transpose() * &d.u - w.v.transpose() * &d.v;
        let sym = &hat_w_d + hat_w_d.transpose();
        Ok(curvature_f + cross + 0.5 * frob_dot(&imbalance, &d_hat_d) + 0.25 * sym.norm_squared())
    }

    /// Hessian action `∇²G(W)[D]`, obtained by differentiating `∇G`.
    ///
    /// With `Δ = SVᵀ + UYᵀ`, `H_f = ∇²f(X)[Δ]`, `B = ŴᵀW`, `C = D̂ᵀW` and
    /// `E = ŴᵀD`:
    ///
    /// ```text
    /// top    = H_f V  + ∇f Y  + ½(S B + U C + U E)
    /// bottom = H_fᵀU  + ∇fᵀS  − ½(Y B + V C + V E)
    /// ```
    pub fn g_hess_apply(&self, w: &FactorPair, d: &Direction) -> Result<Direction> {
        self.check(w, "g_hess_apply (W)")?;
        self.check(d, "g_hess_apply (D)")?;
        self.hvp_evals.fetch_add(1, Ordering::Relaxed);
        let x = w.product();
        let grad_f = self.oracle.f_grad(&x);
        Ok(self.hess_apply_with(w, &x, &grad_f, d))
    }

    fn hess_apply_with(&self, w: &FactorPair, x: &DMatrix<f64>, grad_f: &DMatrix<f64>, d: &Direction) -> Direction {
        let delta = &d.u * w.v.transpose() + &w.u * d.v.transpose();
        let hf = self.oracle.f_hess_apply(x, &delta);
        let b = w.hat_gram();
        let c = d.u.transpose() * &w.u - d.v.transpose() * &w.v;
        let e = w.u.transpose() * &d.u - w.v.transpose() * &d.v;
        let ce = (&c + &e) * 0.5;
        let half_b = &b * 0.5;
        FactorPair {
            u: &hf * &w.v + grad_f * &d.v + &d.u * &half_b + &w.u * &ce,
            v: hf.transpose() * &w.u + grad_f.transpose() * &d.u - &d.v * &half_b - &w.v * &ce,
        }
    }

    /// `2‖∇f(X)‖_F + ½‖ŴᵀW‖_F`. Under restricted strong convexity of `f`,
    /// `λ_min(∇²G(W)) ≥ −` this value.
    pub fn hessian_lower_bound_surrogate(&self, w: &FactorPair) -> Result<f64> {
        self.check(w, "surrogate")?;
        let grad_f = self.oracle.f_grad(&w.product());
        Ok(2.0 * grad_f.norm() + 0.5 * w.hat_gram().norm())
    }

    /// `‖∇f(UVᵀ)‖_F`.
    pub fn grad_f_norm(&self, w: &FactorPair) -> Result<f64> {
        self.check(w, "grad_f_norm")?;
        Ok(self.oracle.f_grad(&w.product()).norm())
    }

    /// The unrolled Hessian at `W` as a linear operator on `R^N`.
    pub fn hessian_operator<'a>(&'a self, w: &'a FactorPair) -> Result<HessianOperator<'a>> {
        self.check(w, "hessian_operator")?;
        let x = w.product();
        let grad_f = self.oracle.f_grad(&x);
        Ok(HessianOperator { handle: self, w, x, grad_f })
    }
}

/// Everything the solver needs at one iterate.
#[derive(Debug, Clone)]
pub struct PointEval {
    pub w: FactorPair,
    pub value: f64,
    pub grad: FactorPair,
    pub grad_norm: f64,
    /// `‖∇f(UVᵀ)‖_F`.
    pub grad_f_norm: f64,
    /// `‖ŴᵀW‖_F`.
    pub imbalance_norm: f64,
    pub w_norm: f64,
}

impl PointEval {
    /// `2‖∇f(X)‖_F + ½‖ŴᵀW‖_F`.
    pub fn surrogate(&self) -> f64 {
        2.0 * self.grad_f_norm + 0.5 * self.imbalance_norm
    }
}

/// `∇²G(W)` acting on column-major flattened directions.
///
/// `X` and `∇f(X)` are cached; each application still counts as one
/// Hessian-vector product.
pub struct HessianOperator<'a> {
    handle: &'a ObjectiveHandle,
    w: &'a FactorPair,
    x: DMatrix<f64>,
    grad_f: DMatrix<f64>,
}

impl SymmetricOperator for HessianOperator<'_> {
    fn dim(&self) -> usize {
        self.handle.unrolled_dim()
    }

    fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        let (n, m, r) = self.handle.dims();
        self.handle.hvp_evals.fetch_add(1, Ordering::Relaxed);
        let d = FactorPair::from_vector(v, n, m, r);
        self.handle.hess_apply_with(self.w, &self.x, &self.grad_f, &d).to_vector()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::factor::balanced_factorization;
    use crate::linalg::{gaussian_matrix, random_orthogonal};
    use crate::problem::{full_observation_oracle, synthetic_instance, InstanceSpec, ProblemKind};
    use nalgebra::dmatrix;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_pair(n: usize, m: usize, r: usize, rng: &mut ChaCha8Rng) -> FactorPair {
        FactorPair::new(gaussian_matrix(n, r, rng), gaussian_matrix(m, r, rng)).unwrap()
    }

    fn scalar(u: f64, v: f64) -> FactorPair {
        FactorPair::new(dmatrix![u], dmatrix![v]).unwrap()
    }

    #[test]
    fn value_hand_cases() {
        let h = ObjectiveHandle::new(full_observation_oracle(dmatrix![1.0]), 1).unwrap();
        assert_eq!(h.g_value(&scalar(1.0, 1.0)).unwrap(), 0.0);
        let h = ObjectiveHandle::new(full_observation_oracle(dmatrix![2.0]), 1).unwrap();
        assert!((h.g_value(&scalar(2.0, 1.0)).unwrap() - 1.125).abs() < 1e-15);
        assert!((h.hessian_lower_bound_surrogate(&scalar(2.0, 1.0)).unwrap() - 1.5).abs() < 1e-15);
    }

    #[test]
    fn balanced_minimizer_is_stationary() {
        let inst = synthetic_instance(&InstanceSpec::new(7, 5, 2, ProblemKind::Full).with_seed(1)).unwrap();
        let h = ObjectiveHandle::new(inst.oracle(), 2).unwrap();
        assert!(h.g_value(&inst.wstar).unwrap() < 1e-24);
        assert!(h.g_grad(&inst.wstar).unwrap().norm() < 1e-12);
        assert!(h.hessian_lower_bound_surrogate(&inst.wstar).unwrap() < 1e-12);
    }

    #[test]
    fn gradient_with_zero_v() {
        // X = 0, M = 0: gradient reduces to [½UUᵀU; 0].
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let h = ObjectiveHandle::new(full_observation_oracle(DMatrix::zeros(4, 3)), 2).unwrap();
        let u = gaussian_matrix(4, 2, &mut rng);
        let w = FactorPair::new(u.clone(), DMatrix::zeros(3, 2)).unwrap();
        let g = h.g_grad(&w).unwrap();
        let expected = &u * u.transpose() * &u * 0.5;
        assert!((g.u - expected).norm() < 1e-12);
        assert_eq!(g.v.norm(), 0.0);
    }

    #[test]
    fn zero_direction_gives_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let inst = synthetic_instance(&InstanceSpec::new(5, 4, 2, ProblemKind::Completion).with_seed(3)).unwrap();
        let h = ObjectiveHandle::new(inst.oracle(), 2).unwrap();
        let w = random_pair(5, 4, 2, &mut rng);
        let z = h.zeros();
        assert_eq!(h.g_hess_bilinear(&w, &z).unwrap(), 0.0);
        assert_eq!(h.g_hess_apply(&w, &z).unwrap().norm(), 0.0);
    }

    #[test]
    fn action_matches_bilinear_at_minimizer() {
        let inst = synthetic_instance(&InstanceSpec::new(6, 5, 2, ProblemKind::Full).with_seed(4)).unwrap();
        let h = ObjectiveHandle::new(inst.oracle(), 2).unwrap();
        let d = inst.wstar.clone();
        let q = h.g_hess_bilinear(&inst.wstar, &d).unwrap();
        let via_action = d.dot(&h.g_hess_apply(&inst.wstar, &d).unwrap());
        assert!(q > 0.0);
        assert!((q - via_action).abs() <= 1e-8 * q.abs().max(1.0));
    }

    #[test]
    fn counters_increment_once_per_call() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let h = ObjectiveHandle::new(full_observation_oracle(gaussian_matrix(3, 3, &mut rng)), 1).unwrap();
        let w = random_pair(3, 3, 1, &mut rng);
        h.g_value(&w).unwrap();
        h.g_grad(&w).unwrap();
        h.g_grad(&w).unwrap();
        h.g_hess_apply(&w, &w).unwrap();
        h.g_hess_bilinear(&w, &w).unwrap();
        assert_eq!((h.g_evals(), h.hvp_evals()), (2, 1));
        let op = h.hessian_operator(&w).unwrap();
        op.apply(&w.to_vector());
        assert_eq!(h.hvp_evals(), 2);
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let h = ObjectiveHandle::new(full_observation_oracle(DMatrix::zeros(3, 2)), 2).unwrap();
        let bad = FactorPair::zeros(3, 2, 1);
        assert!(matches!(h.g_value(&bad), Err(SaddleError::ShapeMismatch(_))));
        assert!(matches!(h.g_grad(&bad), Err(SaddleError::ShapeMismatch(_))));
    }

    #[test]
    fn value_is_rotation_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let inst = synthetic_instance(&InstanceSpec::new(6, 6, 3, ProblemKind::Sensing).with_seed(6)).unwrap();
        let h = ObjectiveHandle::new(inst.oracle(), 3).unwrap();
        for _ in 0..5 {
            let w = random_pair(6, 6, 3, &mut rng);
            let rot = random_orthogonal(3, &mut rng);
            let a = h.g_value(&w).unwrap();
            let b = h.g_value(&w.rotate(&rot)).unwrap();
            assert!((a - b).abs() <= 1e-10 * a.abs().max(1.0));
        }
    }

    #[test]
    fn surrogate_is_zero_for_balanced_exact_factor() {
        let x = dmatrix![3.0, 1.0; 1.0, 2.0; 0.0, 1.0];
        let w = balanced_factorization(&x, 2).unwrap();
        let h = ObjectiveHandle::new(full_observation_oracle(x), 2).unwrap();
        assert!(h.hessian_lower_bound_surrogate(&w).unwrap() < 1e-12);
    }
}
