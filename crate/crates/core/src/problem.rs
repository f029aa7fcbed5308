//! Concrete losses `f(X)` on `n×m` matrices: matrix completion, matrix
//! sensing and full observation, plus a seeded ground-truth generator and the
//! problem JSON format.

use std::collections::HashSet;
use std::fmt;
use std::path::Path;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SaddleError};
use crate::factor::{balanced_factorization, FactorPair};
use crate::linalg::{self, frob_dot};

/// Value, gradient and Hessian action of a smooth loss `f: R^{n×m} → R`.
///
/// Implementations must be immutable after construction so that concurrent
/// evaluation from several threads is safe.
pub trait ProblemOracle: Send + Sync + fmt::Debug {
    /// `(n, m)`.
    fn dims(&self) -> (usize, usize);

    fn f_value(&self, x: &DMatrix<f64>) -> f64;

    fn f_grad(&self, x: &DMatrix<f64>) -> DMatrix<f64>;

    /// The matrix `H_X[T]` with `<T', H_X[T]> = [∇²f(X)](T', T)`.
    fn f_hess_apply(&self, x: &DMatrix<f64>, t: &DMatrix<f64>) -> DMatrix<f64>;

    /// Lipschitz constant of `∇f` in the Frobenius norm.
    fn lipschitz_grad(&self) -> f64;

    /// Observed data folded back into an `n×m` matrix (`M`, `P_Ω(M)` or
    /// `𝒜ᵀy`). Used to pick a default `γ₀`.
    fn data_matrix(&self) -> DMatrix<f64>;

    fn kind(&self) -> ProblemKind;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProblemKind {
    Completion,
    Sensing,
    Full,
}

impl fmt::Display for ProblemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ProblemKind::Completion => "completion",
            ProblemKind::Sensing => "sensing",
            ProblemKind::Full => "full",
        })
    }
}

impl std::str::FromStr for ProblemKind {
    type Err = SaddleError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "completion" => Ok(ProblemKind::Completion),
            "sensing" => Ok(ProblemKind::Sensing),
            "full" => Ok(ProblemKind::Full),
            other => Err(SaddleError::Schema(format!("unknown kind `{other}` (expected completion, sensing or full)"))),
        }
    }
}

/// Observed entries `M_ij`, `(i, j) ∈ Ω`.
#[derive(Debug, Clone)]
pub struct CompletionInstance {
    n: usize,
    m: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl CompletionInstance {
    pub fn new(n: usize, m: usize, entries: Vec<(usize, usize, f64)>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(entries.len());
        for &(i, j, value) in &entries {
            if i >= n || j >= m {
                return Err(SaddleError::InvalidArgument(format!("omega index ({i}, {j}) out of range for {n}×{m}")));
            }
            if !seen.insert((i, j)) {
                return Err(SaddleError::InvalidArgument(format!("omega index ({i}, {j}) repeated")));
            }
            if !value.is_finite() {
                return Err(SaddleError::InvalidArgument(format!("omega value at ({i}, {j}) is not finite")));
            }
        }
        Ok(Self { n, m, entries })
    }

    pub fn entries(&self) -> &[(usize, usize, f64)] {
        &self.entries
    }

    fn mask(&self, t: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.n, self.m);
        for &(i, j, _) in &self.entries {
            out[(i, j)] = t[(i, j)];
        }
        out
    }
}

impl ProblemOracle for CompletionInstance {
    fn dims(&self) -> (usize, usize) {
        (self.n, self.m)
    }

    fn f_value(&self, x: &DMatrix<f64>) -> f64 {
        0.5 * self.entries.iter().map(|&(i, j, v)| (x[(i, j)] - v).powi(2)).sum::<f64>()
    }

    fn f_grad(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut g = DMatrix::zeros(self.n, self.m);
        for &(i, j, v) in &self.entries {
            g[(i, j)] = x[(i, j)] - v;
        }
        g
    }

    fn f_hess_apply(&self, _x: &DMatrix<f64>, t: &DMatrix<f64>) -> DMatrix<f64> {
        self.mask(t)
    }

    fn lipschitz_grad(&self) -> f64 {
        1.0
    }

    fn data_matrix(&self) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.n, self.m);
        for &(i, j, v) in &self.entries {
            out[(i, j)] = v;
        }
        out
    }

    fn kind(&self) -> ProblemKind {
        ProblemKind::Completion
    }
}

/// Linear measurements `y_i = <A_i, X>`.
#[derive(Debug, Clone)]
pub struct SensingInstance {
    n: usize,
    m: usize,
    matrices: Vec<DMatrix<f64>>,
    y: DVector<f64>,
    lipschitz: f64,
}

impl SensingInstance {
    pub fn new(n: usize, m: usize, matrices: Vec<DMatrix<f64>>, y: DVector<f64>) -> Result<Self> {
        if matrices.is_empty() {
            return Err(SaddleError::InvalidArgument("sensing needs at least one measurement".into()));
        }
        if let Some((k, a)) = matrices.iter().enumerate().find(|(_, a)| a.shape() != (n, m)) {
            return Err(SaddleError::ShapeMismatch(format!(
                "measurement {k} has shape {:?}, expected ({n}, {m})",
                a.shape()
            )));
        }
        if y.len() != matrices.len() {
            return Err(SaddleError::ShapeMismatch(format!(
                "{} observations for {} measurement matrices",
                y.len(),
                matrices.len()
            )));
        }
        let lipschitz = matrices.iter().map(|a| a.norm_squared()).sum();
        Ok(Self { n, m, matrices, y, lipschitz })
    }

    pub fn measurements(&self) -> &[DMatrix<f64>] {
        &self.matrices
    }

    pub fn observations(&self) -> &DVector<f64> {
        &self.y
    }

    fn measure(&self, x: &DMatrix<f64>) -> DVector<f64> {
        DVector::from_iterator(self.matrices.len(), self.matrices.iter().map(|a| frob_dot(a, x)))
    }

    fn adjoint(&self, w: &DVector<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.n, self.m);
        for (a, &wi) in self.matrices.iter().zip(w.iter()) {
            out += a * wi;
        }
        out
    }
}

impl ProblemOracle for SensingInstance {
    fn dims(&self) -> (usize, usize) {
        (self.n, self.m)
    }

    fn f_value(&self, x: &DMatrix<f64>) -> f64 {
        0.5 * (self.measure(x) - &self.y).norm_squared()
    }

    fn f_grad(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        self.adjoint(&(self.measure(x) - &self.y))
    }

    fn f_hess_apply(&self, _x: &DMatrix<f64>, t: &DMatrix<f64>) -> DMatrix<f64> {
        self.adjoint(&self.measure(t))
    }

    fn lipschitz_grad(&self) -> f64 {
        self.lipschitz
    }

    fn data_matrix(&self) -> DMatrix<f64> {
        self.adjoint(&self.y)
    }

    fn kind(&self) -> ProblemKind {
        ProblemKind::Sensing
    }
}

/// `f(X) = ½‖X − M‖²_F`.
#[derive(Debug, Clone)]
pub struct FullObservation {
    target: DMatrix<f64>,
}

impl FullObservation {
    pub fn new(target: DMatrix<f64>) -> Self {
        Self { target }
    }

    pub fn target(&self) -> &DMatrix<f64> {
        &self.target
    }
}

impl ProblemOracle for FullObservation {
    fn dims(&self) -> (usize, usize) {
        self.target.shape()
    }

    fn f_value(&self, x: &DMatrix<f64>) -> f64 {
        0.5 * (x - &self.target).norm_squared()
    }

    fn f_grad(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        x - &self.target
    }

    fn f_hess_apply(&self, _x: &DMatrix<f64>, t: &DMatrix<f64>) -> DMatrix<f64> {
        t.clone()
    }

    fn lipschitz_grad(&self) -> f64 {
        1.0
    }

    fn data_matrix(&self) -> DMatrix<f64> {
        self.target.clone()
    }

    fn kind(&self) -> ProblemKind {
        ProblemKind::Full
    }
}

pub fn completion_oracle(instance: CompletionInstance) -> Arc<dyn ProblemOracle> {
    Arc::new(instance)
}

pub fn sensing_oracle(instance: SensingInstance) -> Arc<dyn ProblemOracle> {
    Arc::new(instance)
}

pub fn full_observation_oracle(target: DMatrix<f64>) -> Arc<dyn ProblemOracle> {
    Arc::new(FullObservation::new(target))
}

/// One of the built-in losses.
#[derive(Debug, Clone)]
pub enum Problem {
    Completion(CompletionInstance),
    Sensing(SensingInstance),
    Full(FullObservation),
}

impl Problem {
    fn inner(&self) -> &dyn ProblemOracle {
        match self {
            Problem::Completion(p) => p,
            Problem::Sensing(p) => p,
            Problem::Full(p) => p,
        }
    }
}

impl ProblemOracle for Problem {
    fn dims(&self) -> (usize, usize) {
        self.inner().dims()
    }

    fn f_value(&self, x: &DMatrix<f64>) -> f64 {
        self.inner().f_value(x)
    }

    fn f_grad(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        self.inner().f_grad(x)
    }

    fn f_hess_apply(&self, x: &DMatrix<f64>, t: &DMatrix<f64>) -> DMatrix<f64> {
        self.inner().f_hess_apply(x, t)
    }

    fn lipschitz_grad(&self) -> f64 {
        self.inner().lipschitz_grad()
    }

    fn data_matrix(&self) -> DMatrix<f64> {
        self.inner().data_matrix()
    }

    fn kind(&self) -> ProblemKind {
        self.inner().kind()
    }
}

/// Parameters of a synthetic ground-truth instance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InstanceSpec {
    pub n: usize,
    pub m: usize,
    pub r: usize,
    /// `σ_1(X*) / σ_r(X*)`.
    pub condition_number: f64,
    pub seed: u64,
    pub kind: ProblemKind,
    /// Fraction of observed entries (completion) or `p / (nm)` (sensing).
    pub density: f64,
    /// `σ_r(X*)`; the spectrum is laid out linearly up to
    /// `condition_number * sigma_min`.
    pub sigma_min: f64,
}

impl InstanceSpec {
    pub fn new(n: usize, m: usize, r: usize, kind: ProblemKind) -> Self {
        Self { n, m, r, condition_number: 1.0, seed: 0, kind, density: 0.5, sigma_min: 1.0 }
    }

    pub fn with_condition(mut self, condition_number: f64) -> Self {
        self.condition_number = condition_number;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_density(mut self, density: f64) -> Self {
        self.density = density;
        self
    }

    pub fn with_sigma_min(mut self, sigma_min: f64) -> Self {
        self.sigma_min = sigma_min;
        self
    }
}

/// A generated problem together with its planted solution.
#[derive(Debug, Clone)]
pub struct SyntheticInstance {
    pub problem: Arc<Problem>,
    pub xstar: DMatrix<f64>,
    pub wstar: FactorPair,
    /// Prescribed singular values of `X*`, descending.
    pub singular_values: Vec<f64>,
}

impl SyntheticInstance {
    pub fn oracle(&self) -> Arc<dyn ProblemOracle> {
        self.problem.clone()
    }

    pub fn sigma_r(&self) -> f64 {
        *self.singular_values.last().expect("rank >= 1")
    }

    pub fn sigma_1(&self) -> f64 {
        self.singular_values[0]
    }
}

/// Builds a seeded instance whose minimizer `X*` has a prescribed spectrum.
///
/// The Assumption-2 constants are not verified for completion or sensing
/// instances; only full observation is guaranteed to satisfy them.
pub fn synthetic_instance(spec: &InstanceSpec) -> Result<SyntheticInstance> {
    let InstanceSpec { n, m, r, condition_number, seed, kind, density, sigma_min } = *spec;
    if n == 0 || m == 0 || r == 0 || r > n.min(m) {
        return Err(SaddleError::InvalidArgument(format!("invalid dims n={n}, m={m}, r={r}")));
    }
    if !(condition_number >= 1.0) || !condition_number.is_finite() {
        return Err(SaddleError::InvalidArgument(format!("condition_number {condition_number} must be >= 1")));
    }
    if !(sigma_min > 0.0) || !sigma_min.is_finite() {
        return Err(SaddleError::InvalidArgument(format!("sigma_min {sigma_min} must be positive")));
    }
    if kind != ProblemKind::Full && !(density > 0.0 && density <= 1.0) {
        return Err(SaddleError::InvalidArgument(format!("density {density} must lie in (0, 1]")));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let singular_values: Vec<f64> = (0..r)
        .map(|i| {
            if r == 1 {
                sigma_min * condition_number
            } else {
                let frac = i as f64 / (r - 1) as f64;
                sigma_min * (condition_number - (condition_number - 1.0) * frac)
            }
        })
        .collect();
    let phi = linalg::random_orthonormal(n, r, &mut rng);
    let psi = linalg::random_orthonormal(m, r, &mut rng);
    let sigma = DMatrix::from_diagonal(&DVector::from_column_slice(&singular_values));
    let xstar = &phi * sigma * psi.transpose();

    let problem = match kind {
        ProblemKind::Full => Problem::Full(FullObservation::new(xstar.clone())),
        ProblemKind::Completion => {
            let count = ((density * (n * m) as f64).round() as usize).clamp(1, n * m);
            let mut picked: Vec<usize> = index::sample(&mut rng, n * m, count).into_vec();
            picked.sort_unstable();
            let entries = picked.into_iter().map(|k| (k / m, k % m, xstar[(k / m, k % m)])).collect();
            Problem::Completion(CompletionInstance::new(n, m, entries)?)
        }
        ProblemKind::Sensing => {
            let p = ((density * (n * m) as f64).round() as usize).max(1);
            let scale = 1.0 / (p as f64).sqrt();
            let matrices: Vec<DMatrix<f64>> = (0..p).map(|_| linalg::gaussian_matrix(n, m, &mut rng) * scale).collect();
            let y = DVector::from_iterator(p, matrices.iter().map(|a| frob_dot(a, &xstar)));
            Problem::Sensing(SensingInstance::new(n, m, matrices, y)?)
        }
    };
    let wstar = balanced_factorization(&xstar, r)?;
    Ok(SyntheticInstance { problem: Arc::new(problem), xstar, wstar, singular_values })
}

/// Dense measurement block of the problem JSON.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Measurements {
    /// `p` matrices, each `n` rows of `m` values.
    pub matrices: Vec<Vec<Vec<f64>>>,
    pub y: Vec<f64>,
}

/// Generator block of the problem JSON.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub seed: u64,
    #[serde(default = "default_condition")]
    pub condition_number: f64,
    #[serde(default = "default_density")]
    pub density: f64,
    #[serde(default = "default_sigma_min")]
    pub sigma_min: f64,
}

fn default_condition() -> f64 {
    1.0
}

fn default_density() -> f64 {
    0.5
}

fn default_sigma_min() -> f64 {
    1.0
}

/// On-disk problem description.
///
/// Either explicit data (`omega`, `measurements` or `dense`, matching
/// `kind`) or a `generator` block must be present. When both are present the
/// data defines the loss and the generator reproduces the planted solution.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProblemFile {
    pub kind: ProblemKind,
    pub n: usize,
    pub m: usize,
    pub r: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega: Option<Vec<(usize, usize, f64)>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub measurements: Option<Measurements>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dense: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<GeneratorSpec>,
}

/// A loaded problem, with the planted solution when it is known.
#[derive(Debug, Clone)]
pub struct LoadedProblem {
    pub oracle: Arc<dyn ProblemOracle>,
    pub r: usize,
    pub planted: Option<SyntheticInstance>,
}

fn rows_to_matrix(rows: &[Vec<f64>], n: usize, m: usize, field: &str) -> Result<DMatrix<f64>> {
    if rows.len() != n || rows.iter().any(|row| row.len() != m) {
        return Err(SaddleError::Schema(format!("field `{field}` must be {n} rows of {m} values")));
    }
    Ok(DMatrix::from_fn(n, m, |i, j| rows[i][j]))
}

impl ProblemFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| SaddleError::Schema(format!("problem file: {e}")))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn instance_spec(&self) -> Option<InstanceSpec> {
        self.generator.map(|g| InstanceSpec {
            n: self.n,
            m: self.m,
            r: self.r,
            condition_number: g.condition_number,
            seed: g.seed,
            kind: self.kind,
            density: g.density,
            sigma_min: g.sigma_min,
        })
    }

    /// Serializes a built-in problem. `generator`, when given, lets readers
    /// reproduce the planted solution.
    pub fn from_problem(problem: &Problem, r: usize, generator: Option<GeneratorSpec>) -> Self {
        let (n, m) = problem.dims();
        let to_rows = |a: &DMatrix<f64>| -> Vec<Vec<f64>> {
            (0..a.nrows()).map(|i| (0..a.ncols()).map(|j| a[(i, j)]).collect()).collect()
        };
        let mut file =
            ProblemFile { kind: problem.kind(), n, m, r, omega: None, measurements: None, dense: None, generator };
        match problem {
            Problem::Full(p) => file.dense = Some(to_rows(p.target())),
            Problem::Completion(p) => file.omega = Some(p.entries().to_vec()),
            Problem::Sensing(p) => {
                file.measurements = Some(Measurements {
                    matrices: p.measurements().iter().map(to_rows).collect(),
                    y: p.observations().iter().copied().collect(),
                })
            }
        }
        file
    }

    /// Materializes a generated instance into a self-contained problem file.
    pub fn from_synthetic(spec: &InstanceSpec, inst: &SyntheticInstance) -> Self {
        let generator = GeneratorSpec {
            seed: spec.seed,
            condition_number: spec.condition_number,
            density: spec.density,
            sigma_min: spec.sigma_min,
        };
        Self::from_problem(&inst.problem, spec.r, Some(generator))
    }

    /// Builds the oracle. Errors name the offending field.
    pub fn build(&self) -> Result<LoadedProblem> {
        let (n, m, r) = (self.n, self.m, self.r);
        if n == 0 || m == 0 {
            return Err(SaddleError::Schema("fields `n` and `m` must be positive".into()));
        }
        if r == 0 || r > n.min(m) {
            return Err(SaddleError::Schema(format!("field `r` must lie in 1..={}", n.min(m))));
        }
        let planted = match self.instance_spec() {
            Some(spec) => {
                Some(synthetic_instance(&spec).map_err(|e| SaddleError::Schema(format!("field `generator`: {e}")))?)
            }
            None => None,
        };
        let explicit: Option<Arc<dyn ProblemOracle>> = match self.kind {
            ProblemKind::Full => match &self.dense {
                Some(rows) => Some(full_observation_oracle(rows_to_matrix(rows, n, m, "dense")?)),
                None => None,
            },
            ProblemKind::Completion => match &self.omega {
                Some(entries) => Some(completion_oracle(
                    CompletionInstance::new(n, m, entries.clone())
                        .map_err(|e| SaddleError::Schema(format!("field `omega`: {e}")))?,
                )),
                None => None,
            },
            ProblemKind::Sensing => match &self.measurements {
                Some(meas) => {
                    let mats = meas
                        .matrices
                        .iter()
                        .map(|rows| rows_to_matrix(rows, n, m, "measurements.matrices"))
                        .collect::<Result<Vec<_>>>()?;
                    let y = DVector::from_vec(meas.y.clone());
                    Some(sensing_oracle(
                        SensingInstance::new(n, m, mats, y)
                            .map_err(|e| SaddleError::Schema(format!("field `measurements`: {e}")))?,
                    ))
                }
                None => None,
            },
        };
        let oracle = match (explicit, &planted) {
            (Some(o), _) => o,
            (None, Some(p)) => p.oracle(),
            (None, None) => {
                let field = match self.kind {
                    ProblemKind::Full => "dense",
                    ProblemKind::Completion => "omega",
                    ProblemKind::Sensing => "measurements",
                };
                return Err(SaddleError::Schema(format!(
                    "kind `{}` requires field `{field}` or `generator`",
                    self.kind
                )));
            }
        };
        Ok(LoadedProblem { oracle, r, planted })
    }
}
