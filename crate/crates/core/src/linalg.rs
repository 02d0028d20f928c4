//! Dense spectral helpers: exact decompositions up to [`DENSE_LIMIT`],
//! power iteration above it.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

/// Largest dimension handled by exact dense decompositions.
pub const DENSE_LIMIT: usize = 4096;

pub const POWER_TOL: f64 = 1e-10;
pub const POWER_MAX_ITER: usize = 100_000;

/// Largest singular value.
pub fn spectral_norm(a: &DMatrix<f64>) -> f64 {
    if a.nrows() == 0 || a.ncols() == 0 {
        return 0.0;
    }
    if a.nrows().max(a.ncols()) <= DENSE_LIMIT {
        a.clone().svd(false, false).singular_values.max()
    } else {
        let at = a.transpose();
        power_iteration(a.ncols(), |x| &at * (a * x), POWER_TOL, POWER_MAX_ITER)
            .0
            .max(0.0)
            .sqrt()
    }
}

/// Largest eigenvalue of a symmetric matrix and a unit eigenvector for it.
pub fn top_eigenpair(m: &DMatrix<f64>) -> (f64, DVector<f64>) {
    let n = m.nrows();
    if n == 0 {
        return (0.0, DVector::zeros(0));
    }
    if n <= DENSE_LIMIT {
        let eig = SymmetricEigen::new(m.clone());
        let (i, &val) = eig
            .eigenvalues
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .expect("nonempty");
        (val, eig.eigenvectors.column(i).into_owned())
    } else {
        let (val, vec) = power_iteration(n, |x| m * x, POWER_TOL, POWER_MAX_ITER);
        (val, vec)
    }
}

/// Power iteration for a positive semidefinite operator given as a closure.
/// Returns the Rayleigh quotient and the final iterate.
pub fn power_iteration<F>(n: usize, apply: F, tol: f64, max_iter: usize) -> (f64, DVector<f64>)
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    if n == 0 {
        return (0.0, DVector::zeros(0));
    }
    // Deterministic, generic start vector.
    let mut x = DVector::from_fn(n, |i, _| 1.0 + ((i * 7919) % 97) as f64 / 97.0);
    x.normalize_mut();
    let mut lambda = 0.0;
    for _ in 0..max_iter {
        let y = apply(&x);
        let next = x.dot(&y);
        let norm = y.norm();
        if norm == 0.0 {
            return (0.0, x);
        }
        x = y / norm;
        if (next - lambda).abs() <= tol * next.abs().max(f64::MIN_POSITIVE) {
            return (next, x);
        }
        lambda = next;
    }
    (lambda, x)
}
