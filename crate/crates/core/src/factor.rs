//! Factor matrices `W = [U; V]`, the hat operator, Procrustes alignment and
//! the balanced factorization of a ground-truth matrix.

use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SaddleError};
use crate::linalg::{self, frob_dot};

/// Singular values below this are treated as zero when building `W*`.
pub const DEGENERATE_RANK_TOL: f64 = 1e-10;

/// The stacked decision variable `W = [U; V]` with `U: n×r`, `V: m×r`.
///
/// The same block layout is used for search directions `D = [S; Y]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "FactorPairRepr", try_from = "FactorPairRepr")]
pub struct FactorPair {
    pub u: DMatrix<f64>,
    pub v: DMatrix<f64>,
}

/// A search direction `D = [S; Y]`; `u` holds `S` and `v` holds `Y`.
pub type Direction = FactorPair;

impl FactorPair {
    pub fn new(u: DMatrix<f64>, v: DMatrix<f64>) -> Result<Self> {
        if u.ncols() != v.ncols() {
            return Err(SaddleError::ShapeMismatch(format!("U has {} columns but V has {}", u.ncols(), v.ncols())));
        }
        Ok(Self { u, v })
    }

    pub fn zeros(n: usize, m: usize, r: usize) -> Self {
        Self { u: DMatrix::zeros(n, r), v: DMatrix::zeros(m, r) }
    }

    pub fn n(&self) -> usize {
        self.u.nrows()
    }

    pub fn m(&self) -> usize {
        self.v.nrows()
    }

    pub fn rank(&self) -> usize {
        self.u.ncols()
    }

    /// Number of scalar unknowns `N = (n + m) r`.
    pub fn len(&self) -> usize {
        (self.n() + self.m()) * self.rank()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn same_shape(&self, other: &FactorPair) -> bool {
        self.u.shape() == other.u.shape() && self.v.shape() == other.v.shape()
    }

    pub(crate) fn check_shape(&self, other: &FactorPair, what: &str) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(SaddleError::ShapeMismatch(format!(
                "{what}: expected U {:?} / V {:?}, got U {:?} / V {:?}",
                self.u.shape(),
                self.v.shape(),
                other.u.shape(),
                other.v.shape()
            )))
        }
    }

    /// `Ŵ = [U; −V]`.
    pub fn hat(&self) -> Self {
        Self { u: self.u.clone(), v: -&self.v }
    }

    /// The `(n+m)×r` stacked matrix.
    pub fn stacked(&self) -> DMatrix<f64> {
        let (n, m, r) = (self.n(), self.m(), self.rank());
        let mut w = DMatrix::zeros(n + m, r);
        w.view_mut((0, 0), (n, r)).copy_from(&self.u);
        w.view_mut((n, 0), (m, r)).copy_from(&self.v);
        w
    }

    pub fn from_stacked(w: &DMatrix<f64>, n: usize) -> Self {
        let m = w.nrows() - n;
        let r = w.ncols();
        Self { u: w.view((0, 0), (n, r)).into_owned(), v: w.view((n, 0), (m, r)).into_owned() }
    }

    /// `ŴᵀW = UᵀU − VᵀV`, the factor imbalance.
    pub fn hat_gram(&self) -> DMatrix<f64> {
        self.u.transpose() * &self.u - self.v.transpose() * &self.v
    }

    /// `X = UVᵀ`.
    pub fn product(&self) -> DMatrix<f64> {
        &self.u * self.v.transpose()
    }

    pub fn norm(&self) -> f64 {
        self.norm_squared().sqrt()
    }

    pub fn norm_squared(&self) -> f64 {
        self.u.norm_squared() + self.v.norm_squared()
    }

    /// Spectral norm of the stacked matrix.
    pub fn spectral_norm(&self) -> f64 {
        linalg::spectral_norm(&self.stacked())
    }

    /// Inner product of the stacked matrices.
    pub fn dot(&self, other: &FactorPair) -> f64 {
        frob_dot(&self.u, &other.u) + frob_dot(&self.v, &other.v)
    }

    /// Right multiplication `W R` by an `r×r` matrix.
    pub fn rotate(&self, rot: &DMatrix<f64>) -> Self {
        Self { u: &self.u * rot, v: &self.v * rot }
    }

    pub fn scale(&self, alpha: f64) -> Self {
        Self { u: &self.u * alpha, v: &self.v * alpha }
    }

    /// `self + alpha * other`.
    pub fn axpy(&self, alpha: f64, other: &FactorPair) -> Self {
        Self { u: &self.u + &other.u * alpha, v: &self.v + &other.v * alpha }
    }

    /// Column-major flattening of the stacked matrix into `R^N`.
    pub fn to_vector(&self) -> DVector<f64> {
        let (n, m, r) = (self.n(), self.m(), self.rank());
        let mut out = DVector::zeros((n + m) * r);
        for c in 0..r {
            let base = c * (n + m);
            for i in 0..n {
                out[base + i] = self.u[(i, c)];
            }
            for j in 0..m {
                out[base + n + j] = self.v[(j, c)];
            }
        }
        out
    }

    /// Inverse of [`FactorPair::to_vector`].
    pub fn from_vector(x: &DVector<f64>, n: usize, m: usize, r: usize) -> Self {
        assert_eq!(x.len(), (n + m) * r, "vector length does not match (n+m)r");
        let mut u = DMatrix::zeros(n, r);
        let mut v = DMatrix::zeros(m, r);
        for c in 0..r {
            let base = c * (n + m);
            for i in 0..n {
                u[(i, c)] = x[base + i];
            }
            for j in 0..m {
                v[(j, c)] = x[base + n + j];
            }
        }
        Self { u, v }
    }

    pub fn is_finite(&self) -> bool {
        self.u.iter().chain(self.v.iter()).all(|x| x.is_finite())
    }
}

/// JSON form of a factor pair: row lists `{"U": [[..]], "V": [[..]]}`.
#[derive(Serialize, Deserialize)]
struct FactorPairRepr {
    #[serde(rename = "U")]
    u: Vec<Vec<f64>>,
    #[serde(rename = "V")]
    v: Vec<Vec<f64>>,
}

fn rows_of(a: &DMatrix<f64>) -> Vec<Vec<f64>> {
    a.row_iter().map(|row| row.iter().copied().collect()).collect()
}

fn matrix_from_rows(rows: &[Vec<f64>], name: &str) -> Result<DMatrix<f64>> {
    let cols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|row| row.len() != cols) {
        return Err(SaddleError::ShapeMismatch(format!("{name}: rows have different lengths")));
    }
    Ok(DMatrix::from_fn(rows.len(), cols, |i, j| rows[i][j]))
}

impl From<FactorPair> for FactorPairRepr {
    fn from(w: FactorPair) -> Self {
        Self { u: rows_of(&w.u), v: rows_of(&w.v) }
    }
}

impl TryFrom<FactorPairRepr> for FactorPair {
    type Error = SaddleError;

    fn try_from(repr: FactorPairRepr) -> Result<Self> {
        FactorPair::new(matrix_from_rows(&repr.u, "U")?, matrix_from_rows(&repr.v, "V")?)
    }
}

impl Add for &FactorPair {
    type Output = FactorPair;
    fn add(self, rhs: &FactorPair) -> FactorPair {
        FactorPair { u: &self.u + &rhs.u, v: &self.v + &rhs.v }
    }
}

impl Sub for &FactorPair {
    type Output = FactorPair;
    fn sub(self, rhs: &FactorPair) -> FactorPair {
        FactorPair { u: &self.u - &rhs.u, v: &self.v - &rhs.v }
    }
}

impl Mul<f64> for &FactorPair {
    type Output = FactorPair;
    fn mul(self, rhs: f64) -> FactorPair {
        self.scale(rhs)
    }
}

impl Neg for &FactorPair {
    type Output = FactorPair;
    fn neg(self) -> FactorPair {
        self.scale(-1.0)
    }
}

/// Result of orthogonal Procrustes alignment of `Z2` onto `Z1`.
#[derive(Debug, Clone)]
pub struct Alignment {
    pub rotation: DMatrix<f64>,
    pub distance: f64,
}

/// Solves `min_R ‖Z1 − Z2 R‖_F` over orthogonal `R`.
///
/// With `Z2ᵀZ1 = P Σ Qᵀ` the minimizer is `R = P Qᵀ`. When `Z2ᵀZ1` is rank
/// deficient the minimizer is not unique and one SVD-consistent choice is
/// returned; the distance is unaffected.
pub fn procrustes_align(z1: &DMatrix<f64>, z2: &DMatrix<f64>) -> Result<Alignment> {
    if z1.shape() != z2.shape() {
        return Err(SaddleError::ShapeMismatch(format!("procrustes: {:?} vs {:?}", z1.shape(), z2.shape())));
    }
    let r = z1.ncols();
    if r == 0 {
        return Ok(Alignment { rotation: DMatrix::zeros(0, 0), distance: 0.0 });
    }
    let cross = z2.transpose() * z1;
    let (p, _, q) = linalg::sorted_svd(&cross);
    let rotation = p * q.transpose();
    let distance = (z1 - z2 * &rotation).norm();
    Ok(Alignment { rotation, distance })
}

/// `dist(W1, W2)` on stacked factor pairs.
pub fn factor_distance(w1: &FactorPair, w2: &FactorPair) -> Result<f64> {
    w1.check_shape(w2, "factor_distance")?;
    Ok(procrustes_align(&w1.stacked(), &w2.stacked())?.distance)
}

/// `W* = [ΦΣ^{1/2}; ΨΣ^{1/2}]` from the rank-`r` truncated SVD of `X*`.
///
/// The free rotation is fixed to the identity.
pub fn balanced_factorization(xstar: &DMatrix<f64>, r: usize) -> Result<FactorPair> {
    let (n, m) = xstar.shape();
    if r == 0 || r > n.min(m) {
        return Err(SaddleError::InvalidArgument(format!("rank {r} must lie in 1..={}", n.min(m))));
    }
    let (phi, sigma, psi) = linalg::sorted_svd(xstar);
    if !(sigma[r - 1] >= DEGENERATE_RANK_TOL) {
        return Err(SaddleError::DegenerateRank { rank: r, sigma: sigma[r - 1], tol: DEGENERATE_RANK_TOL });
    }
    let mut u = phi.columns(0, r).into_owned();
    let mut v = psi.columns(0, r).into_owned();
    for (c, s) in sigma.iter().take(r).enumerate() {
        let root = s.sqrt();
        u.column_mut(c).scale_mut(root);
        v.column_mut(c).scale_mut(root);
    }
    Ok(FactorPair { u, v })
}

/// Residuals of the balance identities satisfied by a balanced `W*`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct BalanceReport {
    /// `|‖W*‖² − 2‖X*‖|`
    pub spectral: f64,
    /// `|‖W*(W*)ᵀ‖_F − 2‖X*‖_F|`
    pub frobenius: f64,
    /// `‖(Ŵ*)ᵀW*‖_F`
    pub imbalance: f64,
    /// `2‖X*‖`, for relative comparisons.
    pub spectral_scale: f64,
    /// `2‖X*‖_F`, for relative comparisons.
    pub frobenius_scale: f64,
}

impl BalanceReport {
    pub fn relative_spectral(&self) -> f64 {
        self.spectral / self.spectral_scale.max(f64::MIN_POSITIVE)
    }

    pub fn relative_frobenius(&self) -> f64 {
        self.frobenius / self.frobenius_scale.max(f64::MIN_POSITIVE)
    }
}

/// Evaluates the balance identities for `W*` against `X*`. Never fails;
/// an unbalanced input simply shows up as nonzero residuals.
pub fn balance_identities_report(wstar: &FactorPair, xstar: &DMatrix<f64>) -> BalanceReport {
    let stacked = wstar.stacked();
    let w_norm = linalg::spectral_norm(&stacked);
    // ‖WWᵀ‖_F = ‖WᵀW‖_F, and the r×r form is cheaper.
    let gram_fro = (stacked.transpose() * &stacked).norm();
    let x_norm = linalg::spectral_norm(xstar);
    let x_fro = xstar.norm();
    BalanceReport {
        spectral: (w_norm * w_norm - 2.0 * x_norm).abs(),
        frobenius: (gram_fro - 2.0 * x_fro).abs(),
        imbalance: wstar.hat_gram().norm(),
        spectral_scale: 2.0 * x_norm,
        frobenius_scale: 2.0 * x_fro,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{gaussian_matrix, random_orthogonal};
    use nalgebra::dmatrix;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_pair(n: usize, m: usize, r: usize, seed: u64) -> FactorPair {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        FactorPair::new(gaussian_matrix(n, r, &mut rng), gaussian_matrix(m, r, &mut rng)).unwrap()
    }

    #[test]
    fn hat_flips_bottom_block() {
        let w = FactorPair::new(dmatrix![1.0], dmatrix![2.0]).unwrap();
        let h = w.hat();
        assert_eq!(h.stacked(), dmatrix![1.0; -2.0]);
    }

    #[test]
    fn hat_is_an_involution() {
        let w = random_pair(4, 3, 2, 1);
        assert_eq!(w.hat().hat(), w);
    }

    #[test]
    fn hat_gram_matches_stacked_product() {
        let w = random_pair(5, 4, 3, 2);
        let via_stack = w.hat().stacked().transpose() * w.stacked();
        let err = (via_stack - w.hat_gram()).abs().max();
        assert!(err <= 1e-12, "{err}");
    }

    #[test]
    fn mismatched_columns_rejected() {
        let err = FactorPair::new(DMatrix::zeros(3, 2), DMatrix::zeros(3, 1));
        assert!(matches!(err, Err(SaddleError::ShapeMismatch(_))));
    }

    #[test]
    fn vector_layout_round_trips() {
        let w = random_pair(3, 2, 2, 7);
        let x = w.to_vector();
        assert_eq!(x[0], w.u[(0, 0)]);
        assert_eq!(x[3], w.v[(0, 0)]);
        assert_eq!(x[5], w.u[(0, 1)]);
        assert_eq!(FactorPair::from_vector(&x, 3, 2, 2), w);
    }

    #[test]
    fn procrustes_identity_case() {
        let z = random_pair(4, 3, 2, 3).stacked();
        let a = procrustes_align(&z, &z).unwrap();
        assert!(a.distance < 1e-12);
        assert!((a.rotation - DMatrix::identity(2, 2)).norm() < 1e-10);
    }

    #[test]
    fn procrustes_recovers_rotation() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let z1 = gaussian_matrix(7, 3, &mut rng);
        let r0 = random_orthogonal(3, &mut rng);
        let z2 = &z1 * &r0;
        let a = procrustes_align(&z1, &z2).unwrap();
        assert!(a.distance < 1e-10);
        let ortho = (a.rotation.transpose() * &a.rotation - DMatrix::identity(3, 3)).norm();
        assert!(ortho < 1e-10);
    }

    #[test]
    fn procrustes_rank_one_enumerates_signs() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..20 {
            let z1 = gaussian_matrix(6, 1, &mut rng);
            let z2 = gaussian_matrix(6, 1, &mut rng);
            let expected = (&z1 - &z2).norm().min((&z1 + &z2).norm());
            let got = procrustes_align(&z1, &z2).unwrap().distance;
            assert!((got - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn procrustes_shape_mismatch() {
        let r = procrustes_align(&DMatrix::zeros(3, 2), &DMatrix::zeros(4, 2));
        assert!(matches!(r, Err(SaddleError::ShapeMismatch(_))));
    }

    #[test]
    fn balanced_scalar_case() {
        let w = balanced_factorization(&dmatrix![4.0], 1).unwrap();
        assert!((w.u[(0, 0)].abs() - 2.0).abs() < 1e-14);
        assert!((w.v[(0, 0)].abs() - 2.0).abs() < 1e-14);
        assert!((w.u[(0, 0)] * w.v[(0, 0)] - 4.0).abs() < 1e-14);
        let rep = balance_identities_report(&w, &dmatrix![4.0]);
        assert!(rep.spectral <= 1e-10 && rep.frobenius <= 1e-10 && rep.imbalance <= 1e-10);
        assert!((w.spectral_norm().powi(2) - 8.0).abs() < 1e-12);
    }

    #[test]
    fn balanced_diag_case() {
        let x = dmatrix![9.0, 0.0; 0.0, 4.0];
        let w = balanced_factorization(&x, 2).unwrap();
        let s = w.stacked();
        let gram = &s * s.transpose();
        // Dense eigen oracle: eigenvalues of W*W*ᵀ are 2σ_i(X*).
        let mut eig: Vec<f64> = gram.clone().symmetric_eigenvalues().iter().copied().collect();
        eig.sort_by(|a, b| b.total_cmp(a));
        assert!((eig[0] - 18.0).abs() < 1e-12 && (eig[1] - 8.0).abs() < 1e-12);
        assert!((gram.norm() - 2.0 * 97f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn degenerate_rank_rejected() {
        let x = dmatrix![1.0, 0.0; 0.0, 0.0];
        assert!(matches!(balanced_factorization(&x, 2), Err(SaddleError::DegenerateRank { .. })));
    }

    #[test]
    fn unbalanced_input_is_reported() {
        let x = dmatrix![3.0, 1.0; 1.0, 2.0];
        let w = balanced_factorization(&x, 2).unwrap();
        let skewed = FactorPair::new(&w.u * 2.0, &w.v * 0.5).unwrap();
        let rep = balance_identities_report(&skewed, &x);
        assert!(rep.imbalance > 1.0);
    }
}
