//! The adaptive outer loop and the monitored local phase.
//!
//! Each outer iteration either takes a steepest-descent step (large
//! gradient), a step along a negative-curvature direction from the
//! minimum-eigenvalue oracle, or, when the oracle certifies
//! `λ_min ≥ −c_γ γ_k`, tries a local phase of plain gradient descent whose
//! linear rate is monitored. If the local phase does not converge the
//! estimate `γ_k` is halved.

use std::fmt;
use std::fs;
use std::path::Path;
use std::time::Instant;

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SaddleError};
use crate::factor::FactorPair;
use crate::linalg::power_iteration_sigma1;
use crate::meo::{min_eig_oracle, MeoOutcome};
use crate::objective::{ObjectiveHandle, PointEval};

/// Strict-saddle constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Constants {
    pub c_alpha: f64,
    pub c_beta: f64,
    pub c_gamma: f64,
    pub c_eps: f64,
    /// Overrides the derived large-gradient constant when set.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c_s: Option<f64>,
}

impl Default for Constants {
    fn default() -> Self {
        Self { c_alpha: 1.0 / 16.0, c_beta: 1.0 / 260.0, c_gamma: 1.0 / 6.0, c_eps: 1.0 / 50.0, c_s: None }
    }
}

impl Constants {
    /// `c_s = c_ε min{1, (c_α c_β)^{3/2}}` unless overridden.
    pub fn c_s(&self) -> f64 {
        self.c_s.unwrap_or_else(|| self.c_eps * (self.c_alpha * self.c_beta).powf(1.5).min(1.0))
    }

    fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("c_alpha", self.c_alpha),
            ("c_beta", self.c_beta),
            ("c_gamma", self.c_gamma),
            ("c_eps", self.c_eps),
            ("c_s", self.c_s()),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(SaddleError::InvalidArgument(format!("constants.{name} = {v} must be positive")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub eps_g: f64,
    #[serde(rename = "eps_H")]
    pub eps_h: f64,
    /// Initial estimate of `σ_r(X*)`; estimated from the data when absent.
    pub gamma0: Option<f64>,
    pub eta: f64,
    pub theta: f64,
    /// Bound on the Hessian norm; estimated by Lanczos at each oracle call
    /// when absent.
    #[serde(rename = "M")]
    pub m: Option<f64>,
    pub rho_meo: f64,
    pub max_outer: usize,
    pub max_backtracks: usize,
    pub seed: u64,
    pub constants: Constants,
    /// Lipschitz constant of `∇f`; taken from the problem when absent.
    pub lipschitz_grad_f: Option<f64>,
    /// Cap on iterations of a single local phase.
    pub max_inner: usize,
    /// Write elapsed milliseconds into the trace. Off by default so traces
    /// are reproducible byte for byte.
    pub record_wall_time: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            eps_g: 1e-6,
            eps_h: 1e-4,
            gamma0: None,
            eta: 0.1,
            theta: 0.5,
            m: None,
            rho_meo: 0.05,
            max_outer: 10_000,
            max_backtracks: 60,
            seed: 0,
            constants: Constants::default(),
            lipschitz_grad_f: None,
            max_inner: 1_000_000,
            record_wall_time: false,
        }
    }
}

impl SolverConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| SaddleError::Schema(format!("solver config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        let open_unit = |name: &str, v: f64| {
            if v > 0.0 && v < 1.0 {
                Ok(())
            } else {
                Err(SaddleError::InvalidArgument(format!("{name} = {v} must lie in (0, 1)")))
            }
        };
        open_unit("eps_g", self.eps_g)?;
        open_unit("eps_H", self.eps_h)?;
        open_unit("eta", self.eta)?;
        open_unit("theta", self.theta)?;
        if !(0.0..1.0).contains(&self.rho_meo) {
            return Err(SaddleError::InvalidArgument(format!("rho_meo = {} must lie in [0, 1)", self.rho_meo)));
        }
        if let Some(g) = self.gamma0 {
            if !(g > 0.0 && g.is_finite()) {
                return Err(SaddleError::InvalidArgument(format!("gamma0 = {g} must be positive")));
            }
        }
        if let Some(m) = self.m {
            if !(m > 0.0 && m.is_finite()) {
                return Err(SaddleError::InvalidArgument(format!("M = {m} must be positive")));
            }
        }
        if let Some(l) = self.lipschitz_grad_f {
            if !(l >= 0.0 && l.is_finite()) {
                return Err(SaddleError::InvalidArgument(format!("lipschitz_grad_f = {l} must be nonnegative")));
            }
        }
        for (name, v) in
            [("max_outer", self.max_outer), ("max_backtracks", self.max_backtracks), ("max_inner", self.max_inner)]
        {
            if v == 0 {
                return Err(SaddleError::InvalidArgument(format!("{name} must be positive")));
            }
        }
        self.constants.validate()
    }
}

/// Local-phase parameters derived from `γ_k` and `‖W^k‖_F`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SaddleParams {
    pub gamma_k: f64,
    pub alpha_k: f64,
    pub delta_k: f64,
    pub beta_k: f64,
}

impl SaddleParams {
    pub fn new(gamma_k: f64, w_norm: f64, constants: &Constants) -> Self {
        let alpha_k = constants.c_alpha * gamma_k;
        let delta_k = 2f64.sqrt() * gamma_k.sqrt();
        let beta_k = 2.0 * constants.c_beta / (delta_k + w_norm).powi(2);
        Self { gamma_k, alpha_k, delta_k, beta_k }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepKind {
    Grad,
    Negcurve,
    LocalEntered,
    LocalSkipped,
    GammaHalved,
    Terminated,
}

impl StepKind {
    pub fn as_str(self) -> &'static str {
        match self {
            StepKind::Grad => "grad",
            StepKind::Negcurve => "negcurve",
            StepKind::LocalEntered => "local_entered",
            StepKind::LocalSkipped => "local_skipped",
            StepKind::GammaHalved => "gamma_halved",
            StepKind::Terminated => "terminated",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "grad" => StepKind::Grad,
            "negcurve" => StepKind::Negcurve,
            "local_entered" => StepKind::LocalEntered,
            "local_skipped" => StepKind::LocalSkipped,
            "gamma_halved" => StepKind::GammaHalved,
            "terminated" => StepKind::Terminated,
            _ => return None,
        })
    }
}

impl fmt::Display for StepKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Why a local phase stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LocalExit {
    Converged,
    /// `‖∇G‖ > √κ δ / β` at the exiting iterate.
    GradientMonitor,
    /// The surrogate exceeded `τ_t`.
    SurrogateMonitor,
    /// Both monitored inequalities failed.
    BothMonitors,
    /// The gradient vanished before the tolerances were met.
    ZeroGradient,
    InnerCap,
}

/// The clauses of the local-phase entry test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntryCheck {
    pub step_product_ok: bool,
    pub gradient_ok: bool,
    pub surrogate_ok: bool,
}

impl EntryCheck {
    pub fn passed(&self) -> bool {
        self.step_product_ok && self.gradient_ok && self.surrogate_ok
    }

    /// Names of the failing clauses, for logs.
    pub fn failures(&self) -> Vec<&'static str> {
        let mut out = Vec::new();
        if !self.step_product_ok {
            out.push("alpha*beta");
        }
        if !self.gradient_ok {
            out.push("gradient");
        }
        if !self.surrogate_ok {
            out.push("surrogate");
        }
        out
    }
}

/// One row of the trace.
///
/// `G_value`, `grad_norm` and `surrogate` are measured at the iterate the
/// row starts from; `gamma_halved` and `terminated` rows describe the point
/// reached after the iteration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationRecord {
    pub k: usize,
    pub step_kind: StepKind,
    pub gamma_k: f64,
    pub grad_norm: f64,
    #[serde(rename = "G_value")]
    pub g_value: f64,
    pub nu: f64,
    pub backtracks: usize,
    #[serde(rename = "T_k")]
    pub t_k: usize,
    pub surrogate: f64,
    pub wall_ms: f64,
    /// Lanczos iterations of the oracle call at this iterate, if any.
    pub meo_iterations: usize,
    /// Curvature returned by the oracle on a `negcurve` row.
    pub lambda: Option<f64>,
    pub local_exit: Option<LocalExit>,
    pub entry: Option<EntryCheck>,
    /// `κ_t` and `τ_t` when the local phase stopped.
    pub kappa: Option<f64>,
    pub tau: Option<f64>,
}

pub const TRACE_COLUMNS: [&str; 10] =
    ["k", "step_kind", "gamma_k", "grad_norm", "G_value", "nu", "backtracks", "T_k", "surrogate", "wall_ms"];

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Trace {
    pub records: Vec<IterationRecord>,
}

impl Trace {
    /// CSV with the fixed column set. Floats use Rust's shortest round-trip
    /// exponent form, so equal runs produce identical bytes.
    pub fn to_csv(&self) -> String {
        let mut out = TRACE_COLUMNS.join(",");
        out.push('\n');
        for r in &self.records {
            out.push_str(&format!(
                "{},{},{:e},{:e},{:e},{:e},{},{},{:e},{:e}\n",
                r.k, r.step_kind, r.gamma_k, r.grad_norm, r.g_value, r.nu, r.backtracks, r.t_k, r.surrogate, r.wall_ms
            ));
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv())?;
        Ok(())
    }

    pub fn iter_kind(&self, kind: StepKind) -> impl Iterator<Item = &IterationRecord> {
        self.records.iter().filter(move |r| r.step_kind == kind)
    }

    /// Total local-phase iterations over the run.
    pub fn total_local_iters(&self) -> usize {
        self.iter_kind(StepKind::LocalEntered).map(|r| r.t_k).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminationReason {
    Converged,
    BudgetExhausted,
}

#[derive(Debug, Clone, Serialize)]
pub struct SolveResult {
    #[serde(rename = "W_final")]
    pub w_final: FactorPair,
    pub converged: bool,
    pub outer_iters: usize,
    pub total_inner_iters: usize,
    pub g_evals: u64,
    pub hvp_evals: u64,
    pub termination_reason: TerminationReason,
    pub gamma0: f64,
    pub gamma_final: f64,
    pub gamma_halvings: usize,
    pub grad_norm: f64,
    pub surrogate: f64,
    #[serde(rename = "G_value")]
    pub g_value: f64,
    pub meo_calls: usize,
}

/// An accepted backtracking step.
#[derive(Debug, Clone)]
pub struct LineSearchStep {
    pub nu: f64,
    pub w_new: FactorPair,
    pub g_new: f64,
    pub backtracks: usize,
}

/// Backtracking parameters shared by all line searches.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Backtracking {
    pub eta: f64,
    pub theta: f64,
    pub max_backtracks: usize,
}

impl From<&SolverConfig> for Backtracking {
    fn from(c: &SolverConfig) -> Self {
        Self { eta: c.eta, theta: c.theta, max_backtracks: c.max_backtracks }
    }
}

/// Armijo search along `−∇G` with `ν = ζθ^j`, smallest `j` such that
/// `G(W − ν∇G) < G(W) − ην‖∇G‖²`.
pub fn armijo_gradient_search(
    h: &ObjectiveHandle,
    w: &FactorPair,
    zeta: f64,
    ls: Backtracking,
) -> Result<LineSearchStep> {
    let at = h.evaluate(w)?;
    armijo_from(h, &at, zeta, ls)
}

/// [`armijo_gradient_search`] reusing a gradient already computed at `W`.
pub fn armijo_from(h: &ObjectiveHandle, at: &PointEval, zeta: f64, ls: Backtracking) -> Result<LineSearchStep> {
    if !(at.grad_norm > 0.0) {
        return Err(SaddleError::InvalidArgument("gradient step requested at a point with zero gradient".into()));
    }
    if !(zeta > 0.0) {
        return Err(SaddleError::InvalidArgument(format!("initial step {zeta} must be positive")));
    }
    let sq = at.grad_norm * at.grad_norm;
    let mut nu = zeta;
    for j in 0..=ls.max_backtracks {
        let trial = at.w.axpy(-nu, &at.grad);
        let g = h.g_value(&trial)?;
        if g < at.value - ls.eta * nu * sq {
            return Ok(LineSearchStep { nu, w_new: trial, g_new: g, backtracks: j });
        }
        nu *= ls.theta;
    }
    Err(SaddleError::LineSearchFailure { backtracks: ls.max_backtracks, context: "gradient step" })
}

/// `D = −sgn(⟨S, ∇G⟩)|λ|S` with `sgn(0) = +1`.
pub fn negative_curvature_direction(s: &FactorPair, lambda: f64, grad: &FactorPair) -> FactorPair {
    let sign = if s.dot(grad) >= 0.0 { 1.0 } else { -1.0 };
    s.scale(-sign * lambda.abs())
}

/// Backtracking along the negative-curvature direction built from the unit
/// vector `s` with `sᵀ∇²G(W)s = λ < 0`: smallest `j` with
/// `G(W + θʲD) < G(W) + η(θ^{2j}/2)⟨D, ∇²G D⟩`, where `⟨D, ∇²G D⟩ = λ|λ|²`.
pub fn negative_curvature_search(
    h: &ObjectiveHandle,
    w: &FactorPair,
    s: &DVector<f64>,
    lambda: f64,
    ls: Backtracking,
) -> Result<LineSearchStep> {
    let at = h.evaluate(w)?;
    negative_curvature_from(h, &at, s, lambda, ls)
}

pub fn negative_curvature_from(
    h: &ObjectiveHandle,
    at: &PointEval,
    s: &DVector<f64>,
    lambda: f64,
    ls: Backtracking,
) -> Result<LineSearchStep> {
    if !(lambda < 0.0) {
        return Err(SaddleError::InvalidArgument(format!("curvature {lambda} must be negative")));
    }
    if (s.norm() - 1.0).abs() > 1e-8 {
        return Err(SaddleError::InvalidArgument("curvature direction must have unit norm".into()));
    }
    let (n, m, r) = h.dims();
    if s.len() != (n + m) * r {
        return Err(SaddleError::ShapeMismatch(format!("direction has length {}, expected {}", s.len(), (n + m) * r)));
    }
    let shaped = FactorPair::from_vector(s, n, m, r);
    let d = negative_curvature_direction(&shaped, lambda, &at.grad);
    let curvature = lambda * lambda * lambda;
    let mut nu: f64 = 1.0;
    for j in 0..=ls.max_backtracks {
        let trial = at.w.axpy(nu, &d);
        let g = h.g_value(&trial)?;
        if g < at.value + ls.eta * 0.5 * nu * nu * curvature {
            return Ok(LineSearchStep { nu, w_new: trial, g_new: g, backtracks: j });
        }
        nu *= ls.theta;
    }
    Err(SaddleError::LineSearchFailure { backtracks: ls.max_backtracks, context: "negative curvature step" })
}

fn entry_check_at(at: &PointEval, p: &SaddleParams, l_grad_f: f64) -> EntryCheck {
    EntryCheck {
        step_product_ok: p.alpha_k * p.beta_k <= 0.25,
        gradient_ok: at.grad_norm <= p.delta_k / p.beta_k,
        surrogate_ok: at.surrogate() <= (2.0 * l_grad_f + 0.5) * (2.0 * at.w_norm + p.delta_k) * p.delta_k,
    }
}

/// The guard in front of the local phase; all inequalities non-strict.
pub fn local_entry_check(h: &ObjectiveHandle, w: &FactorPair, params: &SaddleParams, l_grad_f: f64) -> Result<bool> {
    Ok(entry_check_at(&h.evaluate(w)?, params, l_grad_f).passed())
}

#[derive(Debug, Clone)]
pub struct LocalPhaseOutcome {
    pub end: PointEval,
    pub t_k: usize,
    pub converged: bool,
    pub exit: LocalExit,
    pub kappa: f64,
    pub tau: f64,
    pub backtracks: usize,
    /// Step size of the last accepted step (0 when none was taken).
    pub last_nu: f64,
}

/// `τ = (2L + ½)(2‖W‖_F + √κ δ)√κ δ`.
fn tau_bound(l_grad_f: f64, w_norm: f64, kappa: f64, delta: f64) -> f64 {
    let s = kappa.sqrt() * delta;
    (2.0 * l_grad_f + 0.5) * (2.0 * w_norm + s) * s
}

/// Tolerances the local phase must reach.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    pub eps_g: f64,
    pub eps_h: f64,
}

impl Tolerances {
    fn met(&self, at: &PointEval) -> bool {
        at.grad_norm <= self.eps_g && at.surrogate() <= self.eps_h
    }
}

/// The monitored gradient loop, started at `W^k_0`.
pub fn local_phase(
    h: &ObjectiveHandle,
    w0: &FactorPair,
    tol: Tolerances,
    params: &SaddleParams,
    ls: Backtracking,
    l_grad_f: f64,
    max_inner: usize,
) -> Result<LocalPhaseOutcome> {
    local_phase_from(h, h.evaluate(w0)?, tol, params, ls, l_grad_f, max_inner)
}

fn local_phase_from(
    h: &ObjectiveHandle,
    start: PointEval,
    tol: Tolerances,
    params: &SaddleParams,
    ls: Backtracking,
    l_grad_f: f64,
    max_inner: usize,
) -> Result<LocalPhaseOutcome> {
    let mut kappa = 1.0f64;
    let mut tau = tau_bound(l_grad_f, start.w_norm, kappa, params.delta_k);
    let mut at = start;
    let mut t = 0;
    let mut backtracks = 0;
    let mut last_nu = 0.0;
    let finish = |at, t, exit, kappa, tau, backtracks, last_nu| {
        Ok(LocalPhaseOutcome {
            end: at,
            t_k: t,
            converged: exit == LocalExit::Converged,
            exit,
            kappa,
            tau,
            backtracks,
            last_nu,
        })
    };
    // A starting point that already meets the tolerances is returned as is:
    // no strict decrease is available there in floating point.
    if tol.met(&at) {
        return finish(at, 0, LocalExit::Converged, kappa, tau, 0, 0.0);
    }
    loop {
        let gradient_ok = at.grad_norm <= kappa.sqrt() / params.beta_k * params.delta_k;
        let surrogate_ok = at.surrogate() <= tau;
        let exit = match (gradient_ok, surrogate_ok) {
            (true, true) => None,
            (false, true) => Some(LocalExit::GradientMonitor),
            (true, false) => Some(LocalExit::SurrogateMonitor),
            (false, false) => Some(LocalExit::BothMonitors),
        };
        if let Some(exit) = exit {
            return finish(at, t, exit, kappa, tau, backtracks, last_nu);
        }
        if t >= max_inner {
            return finish(at, t, LocalExit::InnerCap, kappa, tau, backtracks, last_nu);
        }
        if at.grad_norm == 0.0 {
            return finish(at, t, LocalExit::ZeroGradient, kappa, tau, backtracks, last_nu);
        }
        let step = armijo_from(h, &at, 2.0 * params.beta_k, ls)?;
        kappa *= 1.0 - 2.0 * step.nu * params.alpha_k;
        at = h.evaluate(&step.w_new)?;
        tau = tau_bound(l_grad_f, at.w_norm, kappa, params.delta_k);
        t += 1;
        backtracks += step.backtracks;
        last_nu = step.nu;
        if tol.met(&at) {
            return finish(at, t, LocalExit::Converged, kappa, tau, backtracks, last_nu);
        }
    }
}

/// Default `γ₀`: power-iteration estimate of the top singular value of the
/// observed data matrix.
pub fn default_gamma0(h: &ObjectiveHandle, seed: u64) -> f64 {
    let data = h.oracle().data_matrix();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_9a44);
    power_iteration_sigma1(&data, 200, &mut rng)
}

pub fn solve(h: &ObjectiveHandle, w0: &FactorPair, config: &SolverConfig) -> Result<(SolveResult, Trace)> {
    solve_with_observer(h, w0, config, |_, _| {})
}

/// [`solve`], calling `observer` with every trace record and the iterate
/// the record's measurements refer to.
pub fn solve_with_observer<F>(
    h: &ObjectiveHandle,
    w0: &FactorPair,
    config: &SolverConfig,
    mut observer: F,
) -> Result<(SolveResult, Trace)>
where
    F: FnMut(&IterationRecord, &FactorPair),
{
    config.validate()?;
    let (n, m, r) = h.dims();
    if w0.u.shape() != (n, r) || w0.v.shape() != (m, r) {
        return Err(SaddleError::ShapeMismatch(format!(
            "W0 has U {:?} / V {:?}, expected ({n}, {r}) / ({m}, {r})",
            w0.u.shape(),
            w0.v.shape()
        )));
    }
    if !w0.is_finite() {
        return Err(SaddleError::NumericalFailure("W0 has non-finite entries".into()));
    }
    let gamma0 = match config.gamma0 {
        Some(g) => g,
        None => default_gamma0(h, config.seed),
    };
    if !(gamma0 > 0.0 && gamma0.is_finite()) {
        return Err(SaddleError::InvalidArgument(format!("gamma0 = {gamma0} must be positive")));
    }
    let g_start = h.g_evals();
    let hvp_start = h.hvp_evals();
    let consts = config.constants;
    let c_s = consts.c_s();
    let l_grad_f = config.lipschitz_grad_f.unwrap_or_else(|| h.lipschitz_grad_f());
    let ls = Backtracking::from(config);
    let tol = Tolerances { eps_g: config.eps_g, eps_h: config.eps_h };
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let clock = Instant::now();
    let wall = || if config.record_wall_time { clock.elapsed().as_secs_f64() * 1e3 } else { 0.0 };

    let mut trace = Trace::default();
    let mut emit = |trace: &mut Trace, rec: IterationRecord, w: &FactorPair| {
        log::debug!(
            "k={} {} gamma={:e} |grad|={:e} G={:e} nu={:e} T={}",
            rec.k,
            rec.step_kind,
            rec.gamma_k,
            rec.grad_norm,
            rec.g_value,
            rec.nu,
            rec.t_k
        );
        observer(&rec, w);
        trace.records.push(rec);
    };
    let blank = |k: usize, kind: StepKind, gamma: f64, at: &PointEval, wall_ms: f64| IterationRecord {
        k,
        step_kind: kind,
        gamma_k: gamma,
        grad_norm: at.grad_norm,
        g_value: at.value,
        nu: 0.0,
        backtracks: 0,
        t_k: 0,
        surrogate: at.surrogate(),
        wall_ms,
        meo_iterations: 0,
        lambda: None,
        local_exit: None,
        entry: None,
        kappa: None,
        tau: None,
    };

    let mut cur = h.evaluate(w0)?;
    let mut gamma = gamma0;
    let mut halvings = 0;
    let mut inner_total = 0;
    let mut meo_calls = 0;
    let mut converged = false;
    let mut outer_iters = config.max_outer;

    for k in 0..config.max_outer {
        if cur.grad_norm >= c_s * gamma.powf(1.5) {
            let step = armijo_from(h, &cur, 1.0, ls)?;
            let mut rec = blank(k, StepKind::Grad, gamma, &cur, wall());
            rec.nu = step.nu;
            rec.backtracks = step.backtracks;
            emit(&mut trace, rec, &cur.w);
            cur = h.evaluate(&step.w_new)?;
            continue;
        }
        let report = {
            let op = h.hessian_operator(&cur.w)?;
            min_eig_oracle(&op, consts.c_gamma * gamma, config.m, config.rho_meo, &mut rng)?
        };
        meo_calls += 1;
        match report.outcome {
            MeoOutcome::NegativeCurvature { lambda, s } => {
                let step = negative_curvature_from(h, &cur, &s, lambda, ls)?;
                let mut rec = blank(k, StepKind::Negcurve, gamma, &cur, wall());
                rec.nu = step.nu;
                rec.backtracks = step.backtracks;
                rec.meo_iterations = report.iterations;
                rec.lambda = Some(lambda);
                emit(&mut trace, rec, &cur.w);
                cur = h.evaluate(&step.w_new)?;
            }
            MeoOutcome::Certificate { .. } => {
                let params = SaddleParams::new(gamma, cur.w_norm, &consts);
                let entry = entry_check_at(&cur, &params, l_grad_f);
                if entry.passed() {
                    let local = local_phase_from(h, cur.clone(), tol, &params, ls, l_grad_f, config.max_inner)?;
                    inner_total += local.t_k;
                    let mut rec = blank(k, StepKind::LocalEntered, gamma, &cur, wall());
                    rec.nu = local.last_nu;
                    rec.backtracks = local.backtracks;
                    rec.t_k = local.t_k;
                    rec.meo_iterations = report.iterations;
                    rec.local_exit = Some(local.exit);
                    rec.entry = Some(entry);
                    rec.kappa = Some(local.kappa);
                    rec.tau = Some(local.tau);
                    emit(&mut trace, rec, &cur.w);
                    cur = local.end;
                    if local.converged {
                        converged = true;
                        outer_iters = k + 1;
                        break;
                    }
                } else {
                    log::debug!("k={k}: local phase skipped, failing clauses {:?}", entry.failures());
                    let mut rec = blank(k, StepKind::LocalSkipped, gamma, &cur, wall());
                    rec.meo_iterations = report.iterations;
                    rec.entry = Some(entry);
                    emit(&mut trace, rec, &cur.w);
                }
                gamma *= 0.5;
                halvings += 1;
                let rec = blank(k, StepKind::GammaHalved, gamma, &cur, wall());
                emit(&mut trace, rec, &cur.w);
            }
        }
    }

    let termination_reason = if converged { TerminationReason::Converged } else { TerminationReason::BudgetExhausted };
    let rec = blank(outer_iters, StepKind::Terminated, gamma, &cur, wall());
    emit(&mut trace, rec, &cur.w);
    log::info!(
        "{:?} after {} outer / {} inner iterations, gamma {:e}, |grad| {:e}",
        termination_reason,
        outer_iters,
        inner_total,
        gamma,
        cur.grad_norm
    );
    let result = SolveResult {
        grad_norm: cur.grad_norm,
        surrogate: cur.surrogate(),
        g_value: cur.value,
        w_final: cur.w,
        converged,
        outer_iters,
        total_inner_iters: inner_total,
        g_evals: h.g_evals() - g_start,
        hvp_evals: h.hvp_evals() - hvp_start,
        termination_reason,
        gamma0,
        gamma_final: gamma,
        gamma_halvings: halvings,
        meo_calls,
    };
    Ok((result, trace))
}
