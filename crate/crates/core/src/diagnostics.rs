//! Ground-truth diagnostics for desk-scale instances: region
//! classification, a dense Hessian eigen-oracle, audits of the strict-saddle
//! inequalities, and the theoretical iteration budgets.
//!
//! Nothing here is used by the solver itself.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Result, SaddleError};
use crate::factor::{balanced_factorization, procrustes_align, FactorPair};
use crate::linalg::{gaussian_matrix, random_orthogonal, singular_values, spectral_norm};
use crate::objective::ObjectiveHandle;
use crate::problem::{full_observation_oracle, SyntheticInstance};
use crate::solver::{Constants, IterationRecord, StepKind};

/// Largest unrolled dimension the dense routines accept.
pub const DENSE_LIMIT: usize = 2000;

/// Rejection-sampling attempts per region.
pub const REGION_TRIAL_BUDGET: usize = 10_000;

#[derive(Debug, Clone)]
pub struct GroundTruth {
    pub xstar: DMatrix<f64>,
    pub wstar: FactorPair,
    pub sigma_r: f64,
    pub sigma_1: f64,
    pub xstar_fro: f64,
}

impl GroundTruth {
    pub fn new(xstar: DMatrix<f64>, r: usize) -> Result<Self> {
        let wstar = balanced_factorization(&xstar, r)?;
        let s = singular_values(&xstar);
        Ok(Self { sigma_r: s[r - 1], sigma_1: s[0], xstar_fro: xstar.norm(), wstar, xstar })
    }

    pub fn from_instance(inst: &SyntheticInstance) -> Result<Self> {
        Self::new(inst.xstar.clone(), inst.wstar.rank())
    }

    pub fn rank(&self) -> usize {
        self.wstar.rank()
    }

    /// `‖W*‖ = √2 ‖X*‖^{1/2}`.
    pub fn wstar_spectral(&self) -> f64 {
        (2.0 * self.sigma_1).sqrt()
    }

    /// `‖W*(W*)ᵀ‖_F = 2‖X*‖_F`.
    pub fn wstar_gram_fro(&self) -> f64 {
        2.0 * self.xstar_fro
    }

    /// The full-observation objective `½‖UVᵀ − X*‖²` for this ground truth.
    pub fn full_observation_handle(&self) -> Result<ObjectiveHandle> {
        ObjectiveHandle::new(full_observation_oracle(self.xstar.clone()), self.rank())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub enum Region {
    R1,
    R2,
    R3p,
    R3pp,
    R3ppp,
}

impl Region {
    pub const ALL: [Region; 5] = [Region::R1, Region::R2, Region::R3p, Region::R3pp, Region::R3ppp];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct RegionLabel {
    pub r1: bool,
    pub r2: bool,
    pub r3p: bool,
    pub r3pp: bool,
    pub r3ppp: bool,
}

impl RegionLabel {
    pub fn contains(&self, region: Region) -> bool {
        match region {
            Region::R1 => self.r1,
            Region::R2 => self.r2,
            Region::R3p => self.r3p,
            Region::R3pp => self.r3pp,
            Region::R3ppp => self.r3ppp,
        }
    }

    pub fn any(&self) -> bool {
        self.r1 || self.r2 || self.r3()
    }

    pub fn r3(&self) -> bool {
        self.r3p || self.r3pp || self.r3ppp
    }

    /// In some part of R3 and in neither R1 nor R2.
    pub fn only_r3(&self) -> bool {
        self.r3() && !self.r1 && !self.r2
    }

    /// In R2 and nowhere else.
    pub fn only_r2(&self) -> bool {
        self.r2 && !self.r1 && !self.r3()
    }
}

/// Quantities the region predicates are built from.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct RegionMeasures {
    pub dist: f64,
    pub sigma_r_w: f64,
    pub w_spectral: f64,
    pub gram_fro: f64,
}

pub fn region_measures(w: &FactorPair, gt: &GroundTruth) -> Result<RegionMeasures> {
    let stacked = w.stacked();
    let align = procrustes_align(&stacked, &gt.wstar.stacked())?;
    let s = singular_values(&stacked);
    Ok(RegionMeasures {
        dist: align.distance,
        sigma_r_w: s.get(gt.rank() - 1).copied().unwrap_or(0.0),
        w_spectral: s.first().copied().unwrap_or(0.0),
        gram_fro: (stacked.transpose() * &stacked).norm(),
    })
}

pub fn classify_region(w: &FactorPair, gt: &GroundTruth) -> Result<RegionLabel> {
    let m = region_measures(w, gt)?;
    let root = gt.sigma_r.sqrt();
    let half_root = 0.5f64.sqrt() * root;
    let w_star = gt.wstar_spectral();
    let gram_star = gt.wstar_gram_fro();
    Ok(RegionLabel {
        r1: m.dist <= root,
        r2: m.sigma_r_w <= half_root && m.gram_fro <= 20.0 / 19.0 * gram_star,
        r3p: m.dist > root
            && m.w_spectral <= 20.0 / 19.0 * w_star
            && m.sigma_r_w > half_root
            && m.gram_fro <= 20.0 / 19.0 * gram_star,
        r3pp: m.w_spectral > 20.0 / 19.0 * w_star && m.gram_fro <= 10.0 / 9.0 * gram_star,
        r3ppp: m.gram_fro > 10.0 / 9.0 * gram_star,
    })
}

/// The unrolled Hessian, materialized column by column.
#[derive(Debug, Clone)]
pub struct DenseHessian {
    /// Symmetrized matrix `(H + Hᵀ)/2`.
    pub matrix: DMatrix<f64>,
    /// `‖H − Hᵀ‖_F / ‖H‖_F` before symmetrization.
    pub asymmetry: f64,
}

pub fn dense_hessian(h: &ObjectiveHandle, w: &FactorPair) -> Result<DenseHessian> {
    let n_dim = h.unrolled_dim();
    if n_dim > DENSE_LIMIT {
        return Err(SaddleError::TooLarge { n: n_dim, limit: DENSE_LIMIT });
    }
    let (n, m, r) = h.dims();
    let mut raw = DMatrix::zeros(n_dim, n_dim);
    let mut e = DVector::zeros(n_dim);
    for j in 0..n_dim {
        e[j] = 1.0;
        let col = h.g_hess_apply(w, &FactorPair::from_vector(&e, n, m, r))?.to_vector();
        raw.set_column(j, &col);
        e[j] = 0.0;
    }
    let scale = raw.norm();
    let asymmetry = if scale > 0.0 { (&raw - raw.transpose()).norm() / scale } else { 0.0 };
    let matrix = (&raw + raw.transpose()) * 0.5;
    Ok(DenseHessian { matrix, asymmetry })
}

/// Smallest eigenpair of the dense Hessian, `(λ_min, unit eigenvector)`.
pub fn dense_min_eig(h: &ObjectiveHandle, w: &FactorPair) -> Result<(f64, DVector<f64>)> {
    let hess = dense_hessian(h, w)?;
    Ok(min_eigenpair(&hess.matrix))
}

pub fn min_eigenpair(a: &DMatrix<f64>) -> (f64, DVector<f64>) {
    let eig = a.clone().symmetric_eigen();
    let (idx, lambda) =
        eig.eigenvalues.iter().copied().enumerate().min_by(|x, y| x.1.total_cmp(&y.1)).expect("nonempty matrix");
    (lambda, eig.eigenvectors.column(idx).into_owned())
}

/// Dense check that `λ_min(∇²G) ≥ −(2‖∇f‖ + ½‖ŴᵀW‖)`, with both sides.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Lemma3Check {
    pub lambda_min: f64,
    pub surrogate: f64,
    pub holds: bool,
}

pub fn verify_lemma3(h: &ObjectiveHandle, w: &FactorPair, tol: f64) -> Result<Lemma3Check> {
    let (lambda_min, _) = dense_min_eig(h, w)?;
    let surrogate = h.hessian_lower_bound_surrogate(w)?;
    Ok(Lemma3Check { lambda_min, surrogate, holds: lambda_min >= -surrogate - tol })
}

/// Both sides of `2‖∇f‖ + ½‖ŴᵀW‖ ≤ (2L + ½)(2‖W‖_F + dist) dist`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Lemma4Check {
    pub surrogate: f64,
    pub bound: f64,
    pub dist: f64,
    pub holds: bool,
}

pub fn lemma4_check(h: &ObjectiveHandle, w: &FactorPair, gt: &GroundTruth) -> Result<Lemma4Check> {
    let surrogate = h.hessian_lower_bound_surrogate(w)?;
    let dist = procrustes_align(&w.stacked(), &gt.wstar.stacked())?.distance;
    let bound = (2.0 * h.lipschitz_grad_f() + 0.5) * (2.0 * w.norm() + dist) * dist;
    let holds = surrogate <= bound + 1e-12 * (1.0 + bound);
    Ok(Lemma4Check { surrogate, bound, dist, holds })
}

pub fn verify_lemma4_bound(h: &ObjectiveHandle, w: &FactorPair, gt: &GroundTruth) -> Result<bool> {
    Ok(lemma4_check(h, w, gt)?.holds)
}

/// Left and right sides of the inequality a region promises, oriented so
/// the inequality reads `lhs ≥ rhs`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct InequalitySides {
    pub lhs: f64,
    pub rhs: f64,
}

impl InequalitySides {
    pub fn holds(&self) -> bool {
        self.lhs >= self.rhs - 1e-10 * (self.lhs.abs() + self.rhs.abs()) - 1e-14
    }
}

/// Evaluates the strict-saddle inequality attached to `region` at `W`.
///
/// R1: `⟨∇G, W − W*R⟩ ≥ c_α σ_r dist² + (c_β/‖X*‖)‖∇G‖²`;
/// R2: `−λ_min(∇²G) ≥ c_γ σ_r`;
/// R3', R3'', R3''': `‖∇G‖ ≥ c_ε σ_r^{3/2}`, `c_ε ‖W‖³`, `c_ε ‖WWᵀ‖_F^{3/2}`.
pub fn region_inequality(
    h: &ObjectiveHandle,
    w: &FactorPair,
    gt: &GroundTruth,
    region: Region,
    c: &Constants,
) -> Result<InequalitySides> {
    let grad = h.g_grad(w)?;
    let gnorm = grad.norm();
    Ok(match region {
        Region::R1 => {
            let align = procrustes_align(&w.stacked(), &gt.wstar.stacked())?;
            let target = FactorPair::from_stacked(&(gt.wstar.stacked() * &align.rotation), w.n());
            let lhs = grad.dot(&(w - &target));
            let rhs = c.c_alpha * gt.sigma_r * align.distance.powi(2) + c.c_beta / gt.sigma_1 * gnorm * gnorm;
            InequalitySides { lhs, rhs }
        }
        Region::R2 => {
            let (lambda, _) = dense_min_eig(h, w)?;
            InequalitySides { lhs: -lambda, rhs: c.c_gamma * gt.sigma_r }
        }
        Region::R3p => InequalitySides { lhs: gnorm, rhs: c.c_eps * gt.sigma_r.powf(1.5) },
        Region::R3pp => InequalitySides { lhs: gnorm, rhs: c.c_eps * w.spectral_norm().powi(3) },
        Region::R3ppp => {
            let s = w.stacked();
            InequalitySides { lhs: gnorm, rhs: c.c_eps * (s.transpose() * &s).norm().powf(1.5) }
        }
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct RegionTally {
    pub target: usize,
    pub attempts: usize,
    pub populated: usize,
    pub violations: usize,
    /// Smallest `lhs / rhs` seen (values below 1 are violations).
    pub worst_ratio: f64,
    pub warning: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RegionAudit {
    pub regions: BTreeMap<String, RegionTally>,
}

impl RegionAudit {
    pub fn total_violations(&self) -> usize {
        self.regions.values().map(|t| t.violations).sum()
    }

    pub fn tally(&self, region: Region) -> &RegionTally {
        &self.regions[&format!("{region:?}")]
    }
}

fn unit_direction<R: Rng + ?Sized>(n: usize, m: usize, r: usize, rng: &mut R) -> FactorPair {
    let d = FactorPair { u: gaussian_matrix(n, r, rng), v: gaussian_matrix(m, r, rng) };
    let norm = d.norm();
    d.scale(1.0 / norm)
}

/// One candidate aimed at `region`. Candidates are filtered by
/// [`classify_region`], so the proposals only need to land there often.
fn propose<R: Rng + ?Sized>(region: Region, gt: &GroundTruth, rng: &mut R) -> FactorPair {
    let (n, m, r) = (gt.wstar.n(), gt.wstar.m(), gt.rank());
    let root = gt.sigma_r.sqrt();
    let rotated = gt.wstar.rotate(&random_orthogonal(r, rng));
    match region {
        Region::R1 => {
            let t: f64 = rng.gen_range(0.0..1.0);
            rotated.axpy(t * root, &unit_direction(n, m, r, rng))
        }
        Region::R2 => match rng.gen_range(0..3) {
            0 => unit_direction(n, m, r, rng).scale(rng.gen_range(0.0..0.7) * root),
            1 => {
                // Shrink the weakest column of W* towards zero.
                let mut w = gt.wstar.clone();
                let t: f64 = rng.gen_range(0.0..0.5);
                w.u.column_mut(r - 1).scale_mut(t);
                w.v.column_mut(r - 1).scale_mut(t);
                let noise = rng.gen_range(0.0..0.1) * root;
                w.axpy(noise, &unit_direction(n, m, r, rng)).rotate(&random_orthogonal(r, rng))
            }
            _ => {
                // Random columns drawn from the span of W*, one column dropped.
                let mut w = gt.wstar.rotate(&random_orthogonal(r, rng));
                let c = rng.gen_range(0..r);
                w.u.column_mut(c).fill(0.0);
                w.v.column_mut(c).fill(0.0);
                w.scale(rng.gen_range(0.3..1.0))
            }
        },
        Region::R3p => match rng.gen_range(0..2) {
            0 => rotated.axpy(rng.gen_range(1.0..3.0) * root, &unit_direction(n, m, r, rng)),
            _ => {
                // Correct column spaces, mismatched rotations of U and V.
                let q1 = random_orthogonal(r, rng);
                let q2 = random_orthogonal(r, rng);
                FactorPair { u: &gt.wstar.u * q1, v: &gt.wstar.v * q2 }
            }
        },
        Region::R3pp => {
            // Rank one with spectral norm between the two thresholds.
            let lo = 20.0 / 19.0 * gt.wstar_spectral();
            let hi = (10.0 / 9.0 * gt.wstar_gram_fro()).sqrt();
            let s = if hi > lo { rng.gen_range(lo..hi) } else { lo * 1.001 };
            let a = crate::linalg::unit_sphere_vector(n + m, rng);
            let b = crate::linalg::unit_sphere_vector(r, rng);
            let stacked = a * b.transpose() * s;
            FactorPair::from_stacked(&stacked, n)
        }
        Region::R3ppp => {
            let base = if rng.gen_bool(0.5) { rotated } else { unit_direction(n, m, r, rng) };
            let s = base.stacked();
            let gram = (s.transpose() * &s).norm();
            let target = 10.0 / 9.0 * gt.wstar_gram_fro() * rng.gen_range(1.0..10.0);
            base.scale((target / gram).sqrt())
        }
    }
}

/// Samples points in each region of a full-observation instance and checks
/// the inequality the region promises. Regions that cannot be populated
/// within [`REGION_TRIAL_BUDGET`] attempts get a warning, not a failure.
pub fn verify_region_inequalities(
    gt: &GroundTruth,
    samples: usize,
    seed: u64,
    constants: &Constants,
) -> Result<RegionAudit> {
    let h = gt.full_observation_handle()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut regions = BTreeMap::new();
    for region in Region::ALL {
        let mut tally = RegionTally {
            target: samples,
            attempts: 0,
            populated: 0,
            violations: 0,
            worst_ratio: f64::INFINITY,
            warning: None,
        };
        while tally.populated < samples && tally.attempts < REGION_TRIAL_BUDGET {
            tally.attempts += 1;
            let w = propose(region, gt, &mut rng);
            if !classify_region(&w, gt)?.contains(region) {
                continue;
            }
            tally.populated += 1;
            let sides = region_inequality(&h, &w, gt, region, constants)?;
            if !sides.holds() {
                tally.violations += 1;
                log::warn!("{region:?}: inequality violated, lhs {:e} < rhs {:e}", sides.lhs, sides.rhs);
            }
            let ratio = if sides.rhs > 0.0 { sides.lhs / sides.rhs } else { f64::INFINITY };
            tally.worst_ratio = tally.worst_ratio.min(ratio);
        }
        if tally.populated < samples {
            tally.warning = Some(format!(
                "only {} of {} samples landed in {region:?} after {} attempts",
                tally.populated, samples, tally.attempts
            ));
        }
        regions.insert(format!("{region:?}"), tally);
    }
    Ok(RegionAudit { regions })
}

/// Inputs of the iteration budgets. `n_dim` is `N = (n+m)r` and `u_h` the
/// Hessian-norm bound used in the oracle constant.
#[derive(Debug, Clone, Copy, Serialize, serde::Deserialize)]
pub struct BudgetInputs {
    #[serde(rename = "G_W0")]
    pub g_w0: f64,
    #[serde(rename = "G_low")]
    pub g_low: f64,
    #[serde(rename = "L_g")]
    pub l_g: f64,
    #[serde(rename = "L_H")]
    pub l_h: f64,
    pub sigma_r: f64,
    pub gamma0: f64,
    pub eps_g: f64,
    #[serde(rename = "eps_H")]
    pub eps_h: f64,
    #[serde(rename = "R_L")]
    pub r_l: f64,
    #[serde(rename = "L_grad_f")]
    pub l_grad_f: f64,
    pub rho: f64,
    #[serde(rename = "N")]
    pub n_dim: usize,
    #[serde(rename = "M")]
    pub u_h: f64,
    pub eta: f64,
    pub theta: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BudgetReport {
    #[serde(rename = "K_large")]
    pub k_large: f64,
    #[serde(rename = "K_local")]
    pub k_local: f64,
    #[serde(rename = "K_outer")]
    pub k_outer: f64,
    #[serde(rename = "T_cap")]
    pub t_cap: f64,
    #[serde(rename = "K_total")]
    pub k_total: f64,
    #[serde(rename = "N_meo_cap")]
    pub n_meo_cap: usize,
    /// Bound on gradient evaluations plus Hessian-vector products.
    pub oracle_calls: f64,
    pub nu_min: f64,
    #[serde(rename = "C_hat")]
    pub c_hat: f64,
    pub c_grad: f64,
    pub c_nc: f64,
    pub c_local: f64,
    #[serde(rename = "C_meo")]
    pub c_meo: f64,
    pub inputs: BudgetInputs,
}

/// `N_meo ≤ min{N, 1 + ⌈√2 C_meo c_γ^{-1/2} σ_r^{-1/2}⌉}`.
pub fn n_meo_cap(n_dim: usize, c_meo: f64, c_gamma: f64, sigma_r: f64) -> usize {
    let steps = 2f64.sqrt() * c_meo / (c_gamma * sigma_r).sqrt();
    if steps.is_finite() && steps < n_dim as f64 {
        (1 + steps.ceil() as usize).min(n_dim)
    } else {
        n_dim
    }
}

pub fn theoretical_budgets(inputs: &BudgetInputs, c: &Constants) -> Result<BudgetReport> {
    let positive = [
        ("L_g", inputs.l_g),
        ("sigma_r", inputs.sigma_r),
        ("gamma0", inputs.gamma0),
        ("eps_g", inputs.eps_g),
        ("eps_H", inputs.eps_h),
        ("eta", inputs.eta),
        ("theta", inputs.theta),
    ];
    for (name, v) in positive {
        if !(v > 0.0 && v.is_finite()) {
            return Err(SaddleError::InvalidArgument(format!("budget input {name} = {v} must be positive")));
        }
    }
    for (name, v) in [("L_H", inputs.l_h), ("R_L", inputs.r_l), ("L_grad_f", inputs.l_grad_f), ("M", inputs.u_h)] {
        if !(v >= 0.0 && v.is_finite()) {
            return Err(SaddleError::InvalidArgument(format!("budget input {name} = {v} must be nonnegative")));
        }
    }
    if inputs.g_w0 < inputs.g_low {
        return Err(SaddleError::ParameterInconsistency(format!(
            "G(W0) = {:e} is below G_low = {:e}",
            inputs.g_w0, inputs.g_low
        )));
    }
    let (eta, theta) = (inputs.eta, inputs.theta);
    let root_g0 = inputs.gamma0.sqrt();
    let nu_min = 2.0 * theta * (1.0 - eta) / inputs.l_g;
    let contraction = nu_min * c.c_alpha * inputs.sigma_r;
    if contraction >= 1.0 {
        return Err(SaddleError::ParameterInconsistency(format!(
            "nu_min * c_alpha * sigma_r = {contraction:e} must be below 1"
        )));
    }
    let c_hat = f64::max(
        root_g0 * (2f64.sqrt() * root_g0 + inputs.r_l).powi(2) / (2.0 * c.c_beta),
        (2.0 * inputs.l_grad_f + 0.5) * (2.0 * inputs.r_l + 2f64.sqrt() * root_g0) * 2f64.sqrt() * root_g0,
    );
    let c_grad = eta * f64::min(1.0, nu_min);
    let nc_factor = if inputs.l_h > 0.0 { (3.0 * theta * (1.0 - eta) / inputs.l_h).powi(2).min(1.0) } else { 1.0 };
    let c_nc = eta * c.c_gamma.powi(3) / 16.0 * nc_factor;
    let c_local = eta * f64::min(4.0 * c.c_beta / (2f64.sqrt() * root_g0 + inputs.r_l).powi(2), nu_min);
    let eps_term = f64::max(1.0 / inputs.eps_g, 1.0 / inputs.eps_h).ln();
    let t_cap = 2.0 * (c_hat.ln() + eps_term) / (1.0 / (1.0 - contraction)).ln();
    let c_s = c.c_s();
    let k_large = 8.0 * (inputs.g_w0 - inputs.g_low) / (f64::min(c_s * c_s * c_grad, c_nc) * inputs.sigma_r.powi(3));
    let k_local = (2.0 * inputs.gamma0 / inputs.sigma_r).log2();
    let k_outer = k_large + k_local;
    let k_total = k_large + t_cap * k_local;
    let c_meo = if inputs.rho > 0.0 {
        (2.75 * inputs.n_dim as f64 / (inputs.rho * inputs.rho)).ln() * inputs.u_h.sqrt() / 2.0
    } else {
        f64::INFINITY
    };
    let n_meo = n_meo_cap(inputs.n_dim, c_meo, c.c_gamma, inputs.sigma_r);
    Ok(BudgetReport {
        k_large,
        k_local,
        k_outer,
        t_cap,
        k_total,
        n_meo_cap: n_meo,
        oracle_calls: n_meo as f64 * k_outer + t_cap * k_local,
        nu_min,
        c_hat,
        c_grad,
        c_nc,
        c_local,
        c_meo,
        inputs: *inputs,
    })
}

/// Empirical smoothness constants along a sequence of iterates.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SmoothnessEstimate {
    /// `max ‖∇G(b) − ∇G(a)‖ / ‖b − a‖` over consecutive pairs.
    pub l_g: f64,
    /// `max 2‖∇G(b) − ∇G(a) − ∇²G(a)(b − a)‖ / ‖b − a‖²`.
    pub l_h: f64,
    /// `max ‖W‖` (spectral) over the iterates.
    pub r_l: f64,
    /// Largest Hessian-norm estimate over the iterates.
    pub u_h: f64,
}

pub fn estimate_smoothness(h: &ObjectiveHandle, iterates: &[FactorPair], seed: u64) -> Result<SmoothnessEstimate> {
    let mut est = SmoothnessEstimate { l_g: 0.0, l_h: 0.0, r_l: 0.0, u_h: 0.0 };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for w in iterates {
        est.r_l = est.r_l.max(spectral_norm(&w.stacked()));
        let op = h.hessian_operator(w)?;
        est.u_h = est.u_h.max(crate::meo::operator_norm_estimate(&op, crate::meo::NORM_ESTIMATE_STEPS, &mut rng)?);
    }
    for pair in iterates.windows(2) {
        let (a, b) = (&pair[0], &pair[1]);
        let step = b - a;
        let len = step.norm();
        if len == 0.0 {
            continue;
        }
        let ga = h.g_grad(a)?;
        let gb = h.g_grad(b)?;
        let diff = &gb - &ga;
        est.l_g = est.l_g.max(diff.norm() / len);
        let model = h.g_hess_apply(a, &step)?;
        est.l_h = est.l_h.max(2.0 * (&diff - &model).norm() / (len * len));
    }
    Ok(est)
}

/// Behaviour of the outer loop against the ground-truth regions.
#[derive(Debug, Clone, Default, Serialize)]
pub struct TraceRegionAudit {
    /// Outer iterations audited (those with `γ_k ≥ ½σ_r`).
    pub audited: usize,
    /// Iterates only in R3.
    pub only_r3: usize,
    /// Of those, iterations that did not take a gradient step.
    pub r3_without_gradient_step: usize,
    /// Iterates only in R2.
    pub only_r2: usize,
    /// Of those, iterations where the oracle issued a certificate.
    pub r2_certified: usize,
}

impl TraceRegionAudit {
    pub fn violations(&self) -> usize {
        self.r3_without_gradient_step + self.r2_certified
    }

    pub fn violation_rate(&self) -> f64 {
        if self.audited == 0 {
            0.0
        } else {
            self.violations() as f64 / self.audited as f64
        }
    }

    /// Audits one outer iteration given its record and iterate.
    pub fn observe(&mut self, rec: &IterationRecord, w: &FactorPair, gt: &GroundTruth) -> Result<()> {
        let decision = matches!(
            rec.step_kind,
            StepKind::Grad | StepKind::Negcurve | StepKind::LocalEntered | StepKind::LocalSkipped
        );
        if !decision || rec.gamma_k < 0.5 * gt.sigma_r {
            return Ok(());
        }
        self.audited += 1;
        let label = classify_region(w, gt)?;
        if label.only_r3() {
            self.only_r3 += 1;
            if rec.step_kind != StepKind::Grad {
                self.r3_without_gradient_step += 1;
            }
        }
        if label.only_r2() {
            self.only_r2 += 1;
            if matches!(rec.step_kind, StepKind::LocalEntered | StepKind::LocalSkipped) {
                self.r2_certified += 1;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{synthetic_instance, InstanceSpec, ProblemKind};

    fn truth(seed: u64) -> GroundTruth {
        let inst =
            synthetic_instance(&InstanceSpec::new(8, 6, 2, ProblemKind::Full).with_condition(2.0).with_seed(seed))
                .unwrap();
        GroundTruth::from_instance(&inst).unwrap()
    }

    #[test]
    fn region_hand_cases() {
        let gt = truth(1);
        assert!(classify_region(&gt.wstar, &gt).unwrap().r1);
        let zero = FactorPair::zeros(8, 6, 2);
        assert!(classify_region(&zero, &gt).unwrap().r2);
        // ‖WWᵀ‖_F scales with the square of W.
        let big = gt.wstar.scale(3f64.sqrt());
        let label = classify_region(&big, &gt).unwrap();
        assert!(label.r3ppp && !label.r1);
    }

    #[test]
    fn dense_hessian_is_symmetric_and_psd_at_minimizer() {
        let gt = truth(2);
        let h = gt.full_observation_handle().unwrap();
        let hess = dense_hessian(&h, &gt.wstar).unwrap();
        assert!(hess.asymmetry < 1e-8);
        let (lambda, v) = min_eigenpair(&hess.matrix);
        assert!(lambda >= -1e-8);
        assert!((v.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_is_a_strict_saddle() {
        let gt = truth(3);
        let h = gt.full_observation_handle().unwrap();
        let (lambda, _) = dense_min_eig(&h, &FactorPair::zeros(8, 6, 2)).unwrap();
        assert!(lambda <= -Constants::default().c_gamma * gt.sigma_r);
    }

    #[test]
    fn dense_limit_is_enforced() {
        let h = ObjectiveHandle::new(full_observation_oracle(DMatrix::zeros(700, 700)), 2).unwrap();
        let err = dense_min_eig(&h, &h.zeros()).unwrap_err();
        assert!(matches!(err, SaddleError::TooLarge { n: 2800, limit: 2000 }));
    }

    #[test]
    fn lemma4_at_minimizer_and_scaled() {
        let gt = truth(4);
        let h = gt.full_observation_handle().unwrap();
        let at = lemma4_check(&h, &gt.wstar, &gt).unwrap();
        assert!(at.holds && at.dist < 1e-12);
        let doubled = lemma4_check(&h, &gt.wstar.scale(2.0), &gt).unwrap();
        assert!(doubled.holds && doubled.surrogate > 0.0 && doubled.bound > 0.0);
    }

    #[test]
    fn budget_arithmetic() {
        let c = Constants::default();
        let inputs = BudgetInputs {
            g_w0: 10.0,
            g_low: 0.0,
            l_g: 50.0,
            l_h: 10.0,
            sigma_r: 1.0,
            gamma0: 8.0,
            eps_g: 1e-6,
            eps_h: 1e-4,
            r_l: 3.0,
            l_grad_f: 1.0,
            rho: 0.05,
            n_dim: 120,
            u_h: 40.0,
            eta: 0.1,
            theta: 0.5,
        };
        let rep = theoretical_budgets(&inputs, &c).unwrap();
        assert!((rep.k_local - 4.0).abs() < 1e-12);
        assert_eq!(rep.k_outer, rep.k_large + rep.k_local);
        assert!((rep.nu_min - 0.018).abs() < 1e-15);
        assert_eq!(n_meo_cap(600, 10.0, 1.0 / 6.0, 1.0), 36);
        let bad = BudgetInputs { l_g: 1e-3, ..inputs };
        assert!(matches!(theoretical_budgets(&bad, &c), Err(SaddleError::ParameterInconsistency(_))));
    }
}
