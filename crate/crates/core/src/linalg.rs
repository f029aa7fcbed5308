//! Small dense helpers shared by the solver and the diagnostics.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

/// Frobenius inner product `<A, B> = tr(AᵀB)`.
pub fn frob_dot(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    debug_assert_eq!(a.shape(), b.shape());
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

pub fn gaussian_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

pub fn gaussian_vector<R: Rng + ?Sized>(len: usize, rng: &mut R) -> DVector<f64> {
    DVector::from_fn(len, |_, _| rng.sample(StandardNormal))
}

/// Uniformly distributed point on the unit sphere in `R^len`.
pub fn unit_sphere_vector<R: Rng + ?Sized>(len: usize, rng: &mut R) -> DVector<f64> {
    loop {
        let v = gaussian_vector(len, rng);
        let norm = v.norm();
        if norm > 1e-300 {
            return v / norm;
        }
    }
}

/// Matrix with orthonormal columns (`rows >= cols`) drawn from the Haar measure.
///
/// QR of a Gaussian matrix with the sign of each column fixed by the
/// diagonal of R.
pub fn random_orthonormal<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> DMatrix<f64> {
    assert!(rows >= cols, "need rows >= cols for orthonormal columns");
    let g = gaussian_matrix(rows, cols, rng);
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..cols {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

pub fn random_orthogonal<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> DMatrix<f64> {
    random_orthonormal(dim, dim, rng)
}

/// Singular values in descending order.
pub fn singular_values(a: &DMatrix<f64>) -> Vec<f64> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return Vec::new();
    }
    let mut s: Vec<f64> = a.singular_values().iter().copied().collect();
    s.sort_by(|x, y| y.total_cmp(x));
    s
}

/// Spectral norm (largest singular value).
pub fn spectral_norm(a: &DMatrix<f64>) -> f64 {
    singular_values(a).first().copied().unwrap_or(0.0)
}

/// Thin SVD `A = U diag(s) Vᵀ` with `s` descending and `U`, `V` having
/// orthonormal columns.
///
/// nalgebra's bidiagonal SVD occasionally mixes a nonzero singular triplet
/// with a null-space one on exactly rank-deficient input (the singular
/// values stay right, the vectors do not). The result is therefore checked
/// by recomposition, and on failure rebuilt from the symmetric
/// eigendecomposition of `[0 A; Aᵀ 0]`.
pub fn sorted_svd(a: &DMatrix<f64>) -> (DMatrix<f64>, Vec<f64>, DMatrix<f64>) {
    let (n, m) = a.shape();
    let p = n.min(m);
    if p == 0 {
        return (DMatrix::zeros(n, 0), Vec::new(), DMatrix::zeros(m, 0));
    }
    let tol = 1e-12 * a.norm().max(f64::MIN_POSITIVE) * (p as f64).sqrt();
    let svd = a.clone().svd(true, true);
    let u = svd.u.expect("left singular vectors requested");
    let v = svd.v_t.expect("right singular vectors requested").transpose();
    let out = sort_triplets(&u, svd.singular_values.as_slice(), &v);
    if recomposition_error(a, &out) <= tol {
        return out;
    }
    log::debug!("SVD recomposition check failed on a {n}×{m} matrix; using the eigen fallback");
    svd_via_symmetric_eigen(a)
}

fn sort_triplets(u: &DMatrix<f64>, s: &[f64], v: &DMatrix<f64>) -> (DMatrix<f64>, Vec<f64>, DMatrix<f64>) {
    let mut order: Vec<usize> = (0..s.len()).collect();
    order.sort_by(|&i, &j| s[j].total_cmp(&s[i]));
    let mut us = DMatrix::zeros(u.nrows(), s.len());
    let mut vs = DMatrix::zeros(v.nrows(), s.len());
    for (dst, &src) in order.iter().enumerate() {
        us.set_column(dst, &u.column(src));
        vs.set_column(dst, &v.column(src));
    }
    (us, order.iter().map(|&i| s[i]).collect(), vs)
}

fn recomposition_error(a: &DMatrix<f64>, (u, s, v): &(DMatrix<f64>, Vec<f64>, DMatrix<f64>)) -> f64 {
    let mut scaled = u.clone();
    for (c, sv) in s.iter().enumerate() {
        scaled.column_mut(c).scale_mut(*sv);
    }
    let orth_u = (u.transpose() * u - DMatrix::identity(s.len(), s.len())).norm();
    let orth_v = (v.transpose() * v - DMatrix::identity(s.len(), s.len())).norm();
    (a - scaled * v.transpose()).norm() + (orth_u + orth_v) * a.norm()
}

fn svd_via_symmetric_eigen(a: &DMatrix<f64>) -> (DMatrix<f64>, Vec<f64>, DMatrix<f64>) {
    let (n, m) = a.shape();
    let p = n.min(m);
    let mut big = DMatrix::zeros(n + m, n + m);
    big.view_mut((0, n), (n, m)).copy_from(a);
    big.view_mut((n, 0), (m, n)).copy_from(&a.transpose());
    let eig = big.symmetric_eigen();
    let mut order: Vec<usize> = (0..n + m).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let cutoff = (n + m) as f64 * f64::EPSILON * eig.eigenvalues.amax();
    let mut u = DMatrix::zeros(n, p);
    let mut v = DMatrix::zeros(m, p);
    let mut s = vec![0.0; p];
    let mut rank = 0;
    for &i in order.iter().take(p) {
        let sigma = eig.eigenvalues[i];
        if sigma <= cutoff {
            break;
        }
        let z = eig.eigenvectors.column(i);
        let uc = z.rows(0, n).into_owned();
        let vc = z.rows(n, m).into_owned();
        let (nu, nv) = (uc.norm(), vc.norm());
        if nu == 0.0 || nv == 0.0 {
            break;
        }
        u.set_column(rank, &(uc / nu));
        v.set_column(rank, &(vc / nv));
        s[rank] = sigma;
        rank += 1;
    }
    complete_orthonormal(&mut u, rank);
    complete_orthonormal(&mut v, rank);
    (u, s, v)
}

/// Fills columns `filled..` of `q` so that all columns are orthonormal,
/// drawing candidates from the standard basis.
fn complete_orthonormal(q: &mut DMatrix<f64>, filled: usize) {
    let (rows, cols) = q.shape();
    let mut next = filled;
    for e in 0..rows {
        if next == cols {
            break;
        }
        let mut x = DVector::zeros(rows);
        x[e] = 1.0;
        for _ in 0..2 {
            for c in 0..next {
                let proj = q.column(c).dot(&x);
                x.axpy(-proj, &q.column(c), 1.0);
            }
        }
        let norm = x.norm();
        if norm > 0.5 {
            q.set_column(next, &(x / norm));
            next += 1;
        }
    }
}

/// Best rank-`r` approximation via truncated SVD.
pub fn truncated_svd(a: &DMatrix<f64>, r: usize) -> DMatrix<f64> {
    let (u, s, v) = sorted_svd(a);
    let mut out = DMatrix::zeros(a.nrows(), a.ncols());
    for (i, sv) in s.iter().take(r).enumerate() {
        out += *sv * u.column(i) * v.column(i).transpose();
    }
    out
}

/// Largest singular value by power iteration on `AᵀA` from a seeded start.
pub fn power_iteration_sigma1<R: Rng + ?Sized>(a: &DMatrix<f64>, iters: usize, rng: &mut R) -> f64 {
    if a.ncols() == 0 || a.nrows() == 0 {
        return 0.0;
    }
    let mut x = unit_sphere_vector(a.ncols(), rng);
    let mut sigma = 0.0;
    for _ in 0..iters {
        let y = a * &x;
        let z = a.transpose() * &y;
        let nz = z.norm();
        sigma = y.norm();
        if nz == 0.0 {
            break;
        }
        x = z / nz;
    }
    let y = a * &x;
    sigma.max(y.norm())
}
