//! Randomized minimum-eigenvalue oracle.
//!
//! Lanczos with full reorthogonalization is run from a uniformly random unit
//! vector for at most
//!
//! ```text
//! min{ N, 1 + ⌈½ ln(2.75 N / ρ²) √(M / ε)⌉ }
//! ```
//!
//! iterations. If the smallest Ritz value is at most `−ε/2` the Ritz vector
//! is returned as a direction of negative curvature; otherwise the oracle
//! certifies `λ_min ≥ −ε`, a claim that is wrong with probability at most `ρ`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Result, SaddleError};
use crate::linalg::unit_sphere_vector;

/// A symmetric linear map on `R^N`, applied matrix-free.
pub trait SymmetricOperator {
    fn dim(&self) -> usize;
    fn apply(&self, v: &DVector<f64>) -> DVector<f64>;
}

impl SymmetricOperator for DMatrix<f64> {
    fn dim(&self) -> usize {
        self.nrows()
    }

    fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        self * v
    }
}

/// Default failure probability of the certificate.
pub const DEFAULT_RHO: f64 = 0.05;

/// Relative change of the smallest Ritz value below which Lanczos stops early.
const RITZ_STABLE_TOL: f64 = 1e-10;

/// Lanczos steps used by [`operator_norm_estimate`] when no count is given.
pub const NORM_ESTIMATE_STEPS: usize = 30;

#[derive(Debug, Clone, PartialEq)]
pub enum MeoOutcome {
    /// `s` is a unit vector with `sᵀHs = lambda ≤ −ε/2`.
    NegativeCurvature { lambda: f64, s: DVector<f64> },
    /// `λ_min(H) ≥ −epsilon`, up to failure probability `ρ`.
    Certificate { epsilon: f64 },
}

impl MeoOutcome {
    pub fn is_certificate(&self) -> bool {
        matches!(self, MeoOutcome::Certificate { .. })
    }
}

/// Iteration cap of the randomized Lanczos process.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LanczosBudget {
    pub cap: usize,
    /// Operator-norm bound `M` the cap was computed from.
    pub m_used: f64,
    pub rho: f64,
}

impl LanczosBudget {
    pub fn new(n: usize, m: f64, epsilon: f64, rho: f64) -> Result<Self> {
        if n == 0 {
            return Err(SaddleError::InvalidArgument("operator dimension is zero".into()));
        }
        if !(epsilon > 0.0) {
            return Err(SaddleError::InvalidArgument(format!("epsilon {epsilon} must be positive")));
        }
        if !(0.0..1.0).contains(&rho) {
            return Err(SaddleError::InvalidArgument(format!("rho {rho} must lie in [0, 1)")));
        }
        if !(m >= 0.0) || !m.is_finite() {
            return Err(SaddleError::InvalidArgument(format!("norm bound {m} must be finite and nonnegative")));
        }
        let steps = 0.5 * (2.75 * n as f64 / (rho * rho)).ln() * (m / epsilon).sqrt();
        let cap = if steps.is_finite() && steps < n as f64 { (1 + steps.ceil() as usize).min(n) } else { n };
        Ok(Self { cap, m_used: m, rho })
    }
}

/// Outcome of one oracle call with its cost.
#[derive(Debug, Clone)]
pub struct MeoReport {
    pub outcome: MeoOutcome,
    /// Lanczos iterations (Hessian-vector products) spent by the oracle.
    pub iterations: usize,
    pub budget: LanczosBudget,
    /// Smallest Ritz value at exit.
    pub ritz_min: f64,
    /// Hessian-vector products spent estimating `M` (zero when supplied).
    pub norm_estimate_iterations: usize,
}

struct LanczosRun {
    basis: Vec<DVector<f64>>,
    images: Vec<DVector<f64>>,
    alpha: Vec<f64>,
    beta: Vec<f64>,
}

fn check_finite(v: &DVector<f64>) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(SaddleError::NumericalFailure("operator produced a non-finite value".into()))
    }
}

/// Number of eigenvalues of the symmetric tridiagonal matrix below `x`.
fn sturm_count(alpha: &[f64], beta: &[f64], x: f64) -> usize {
    let mut count = 0;
    let mut d = 1.0;
    for i in 0..alpha.len() {
        let coupling = if i == 0 { 0.0 } else { beta[i - 1] * beta[i - 1] };
        d = alpha[i] - x - if i == 0 { 0.0 } else { coupling / d };
        if d == 0.0 {
            d = -f64::EPSILON * (alpha[i].abs() + x.abs()).max(f64::MIN_POSITIVE);
        }
        if d < 0.0 {
            count += 1;
        }
    }
    count
}

/// Smallest eigenvalue of a symmetric tridiagonal matrix by bisection.
fn tridiagonal_min_eigenvalue(alpha: &[f64], beta: &[f64]) -> f64 {
    let k = alpha.len();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..k {
        let radius = if i > 0 { beta[i - 1].abs() } else { 0.0 } + if i + 1 < k { beta[i].abs() } else { 0.0 };
        lo = lo.min(alpha[i] - radius);
        hi = hi.max(alpha[i] + radius);
    }
    let scale = lo.abs().max(hi.abs()).max(f64::MIN_POSITIVE);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if sturm_count(alpha, beta, mid) >= 1 {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo <= 4.0 * f64::EPSILON * scale {
            break;
        }
    }
    0.5 * (lo + hi)
}

fn tridiagonal(alpha: &[f64], beta: &[f64]) -> DMatrix<f64> {
    let k = alpha.len();
    let mut t = DMatrix::zeros(k, k);
    for i in 0..k {
        t[(i, i)] = alpha[i];
        if i + 1 < k {
            t[(i, i + 1)] = beta[i];
            t[(i + 1, i)] = beta[i];
        }
    }
    t
}

/// Lanczos with full reorthogonalization from `start` (unit norm).
///
/// Stops after `max_iter` steps, on an invariant subspace, or, when
/// `stop_when_stable` is set, once the smallest Ritz value changes by less
/// than [`RITZ_STABLE_TOL`] relative.
fn lanczos<O: SymmetricOperator + ?Sized>(
    op: &O,
    start: DVector<f64>,
    max_iter: usize,
    stop_when_stable: bool,
) -> Result<LanczosRun> {
    let mut run = LanczosRun { basis: Vec::new(), images: Vec::new(), alpha: Vec::new(), beta: Vec::new() };
    let mut q = start;
    let mut scale = 0.0f64;
    let mut last_ritz: Option<f64> = None;
    for k in 0..max_iter {
        let hq = op.apply(&q);
        check_finite(&hq)?;
        let a = q.dot(&hq);
        let mut r = &hq - &q * a;
        if k > 0 {
            r -= &run.basis[k - 1] * run.beta[k - 1];
        }
        run.basis.push(q.clone());
        run.images.push(hq);
        run.alpha.push(a);
        // Two passes of classical Gram-Schmidt against the whole basis.
        for _ in 0..2 {
            for b in &run.basis {
                let c = b.dot(&r);
                r.axpy(-c, b, 1.0);
            }
        }
        let b = r.norm();
        scale = scale.max(a.abs()).max(b);
        if k + 1 == max_iter {
            break;
        }
        if stop_when_stable {
            let ritz = tridiagonal_min_eigenvalue(&run.alpha, &run.beta_with(k));
            if let Some(prev) = last_ritz {
                if (ritz - prev).abs() <= RITZ_STABLE_TOL * ritz.abs() {
                    break;
                }
            }
            last_ritz = Some(ritz);
        }
        if b <= 1e-12 * scale.max(f64::MIN_POSITIVE) || b == 0.0 {
            break;
        }
        run.beta.push(b);
        q = r / b;
    }
    Ok(run)
}

impl LanczosRun {
    /// Off-diagonal of the leading `(k+1)×(k+1)` block.
    fn beta_with(&self, k: usize) -> Vec<f64> {
        self.beta[..k].to_vec()
    }

    fn steps(&self) -> usize {
        self.alpha.len()
    }

    fn off_diagonal(&self) -> &[f64] {
        &self.beta[..self.steps() - 1]
    }

    /// Smallest Ritz pair as `(s, Hs)` with `‖s‖ = 1`.
    fn min_ritz_pair(&self) -> (DVector<f64>, DVector<f64>) {
        let t = tridiagonal(&self.alpha, self.off_diagonal());
        let eig = t.symmetric_eigen();
        let idx = eig
            .eigenvalues
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .expect("at least one Lanczos step");
        let y = eig.eigenvectors.column(idx);
        let dim = self.basis[0].len();
        let mut s = DVector::zeros(dim);
        let mut hs = DVector::zeros(dim);
        for (i, yi) in y.iter().enumerate() {
            s.axpy(*yi, &self.basis[i], 1.0);
            hs.axpy(*yi, &self.images[i], 1.0);
        }
        let norm = s.norm();
        (s / norm, hs / norm)
    }

    fn extreme_ritz(&self) -> (f64, f64) {
        let t = tridiagonal(&self.alpha, self.off_diagonal());
        let ev = t.symmetric_eigenvalues();
        (ev.min(), ev.max())
    }
}

/// Upper estimate of `‖H‖`: the largest Ritz magnitude after `steps`
/// Lanczos iterations (capped at `N`), inflated by 10%.
pub fn operator_norm_estimate<O, R>(op: &O, steps: usize, rng: &mut R) -> Result<f64>
where
    O: SymmetricOperator + ?Sized,
    R: Rng + ?Sized,
{
    let n = op.dim();
    if n == 0 {
        return Err(SaddleError::InvalidArgument("operator dimension is zero".into()));
    }
    let start = unit_sphere_vector(n, rng);
    let run = lanczos(op, start, steps.clamp(1, n), false)?;
    let (lo, hi) = run.extreme_ritz();
    Ok(1.1 * lo.abs().max(hi.abs()))
}

/// The minimum-eigenvalue oracle. `norm_bound` is `M` with `‖H‖ ≤ M`; when
/// absent it is estimated with [`operator_norm_estimate`].
pub fn min_eig_oracle<O, R>(op: &O, epsilon: f64, norm_bound: Option<f64>, rho: f64, rng: &mut R) -> Result<MeoReport>
where
    O: SymmetricOperator + ?Sized,
    R: Rng + ?Sized,
{
    let n = op.dim();
    if let Some(m) = norm_bound {
        if !(m > 0.0) {
            return Err(SaddleError::InvalidArgument(format!("norm bound M = {m} must be positive")));
        }
    }
    if !(epsilon > 0.0) {
        return Err(SaddleError::InvalidArgument(format!("epsilon {epsilon} must be positive")));
    }
    let (m_used, norm_estimate_iterations) = match norm_bound {
        Some(m) => (m, 0),
        None => {
            let steps = NORM_ESTIMATE_STEPS.min(n.max(1));
            (operator_norm_estimate(op, steps, rng)?, steps)
        }
    };
    let budget = LanczosBudget::new(n, m_used, epsilon, rho)?;
    let start = unit_sphere_vector(n, rng);
    let run = lanczos(op, start, budget.cap, true)?;
    let (s, hs) = run.min_ritz_pair();
    let lambda = s.dot(&hs);
    if !lambda.is_finite() {
        return Err(SaddleError::NumericalFailure("Ritz value is not finite".into()));
    }
    let outcome = if lambda <= -0.5 * epsilon {
        MeoOutcome::NegativeCurvature { lambda, s }
    } else {
        MeoOutcome::Certificate { epsilon }
    };
    Ok(MeoReport { outcome, iterations: run.steps(), budget, ritz_min: lambda, norm_estimate_iterations })
}
