//! Small dense symmetric helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Matrices up to this size use a full eigendecomposition for the spectral
/// radius; larger ones fall back to power iteration.
pub const DENSE_RADIUS_MAX: usize = 64;

const POWER_TOL: f64 = 1e-12;
const POWER_MAX_ITERS: usize = 100_000;

pub(crate) fn check_finite(m: &DMatrix<f64>, what: &'static str) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

/// Largest absolute eigenvalue of a symmetric matrix.
pub fn spectral_radius(m: &DMatrix<f64>) -> Result<f64> {
    check_finite(m, "matrix")?;
    if m.nrows() != m.ncols() {
        return Err(Error::DimensionMismatch {
            expected: m.nrows(),
            found: m.ncols(),
        });
    }
    if m.nrows() == 0 {
        return Ok(0.0);
    }
    if m.nrows() <= DENSE_RADIUS_MAX {
        let eig = SymmetricEigen::new(m.clone());
        Ok(eig.eigenvalues.iter().fold(0.0_f64, |acc, v| acc.max(v.abs())))
    } else {
        Ok(power_iteration(m))
    }
}

/// Power iteration on a symmetric matrix, returning `|lambda|_max`.
///
/// Converges on `||M v||` so that a `+/-` pair of dominant eigenvalues does
/// not stall it.
pub fn power_iteration(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    // A deterministic start with nonzero overlap on generic eigenvectors.
    let mut v = DVector::from_fn(n, |i, _| 1.0 + 0.01 * ((i * 7919) % 101) as f64);
    v /= v.norm();
    let mut estimate = 0.0;
    for _ in 0..POWER_MAX_ITERS {
        let w = m * &v;
        let norm = w.norm();
        if norm == 0.0 {
            return 0.0;
        }
        // Two steps per iteration so that the iterate settles for +/- pairs.
        let w2 = m * (&w / norm);
        let norm2 = w2.norm();
        let next = norm2;
        v = w2 / norm2;
        if (next - estimate).abs() <= POWER_TOL * next.max(1e-300) {
            return next;
        }
        estimate = next;
    }
    estimate
}

/// Eigenvalues sorted ascending together with matching eigenvector columns.
pub fn sorted_eigen(m: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(m.clone());
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    let eig = SymmetricEigen::new(m.clone());
    eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min)
}

pub fn max_eigenvalue(m: &DMatrix<f64>) -> f64 {
    let eig = SymmetricEigen::new(m.clone());
    eig.eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
}

/// `(M + M^T) / 2`, used to scrub rounding asymmetry before eigensolves.
pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn radius_of_identity() {
        assert_relative_eq!(spectral_radius(&DMatrix::identity(3, 3)).unwrap(), 1.0);
    }

    #[test]
    fn radius_of_swap() {
        let m = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        assert_relative_eq!(spectral_radius(&m).unwrap(), 1.0, epsilon = 1e-14);
    }

    #[test]
    fn radius_of_four_cycle() {
        // eigenvalues 2cos(2 pi k / 4) = 2, 0, -2, 0
        let mut m = DMatrix::zeros(4, 4);
        for i in 0..4 {
            m[(i, (i + 1) % 4)] = 1.0;
            m[((i + 1) % 4, i)] = 1.0;
        }
        assert_relative_eq!(spectral_radius(&m).unwrap(), 2.0, epsilon = 1e-12);
    }

    #[test]
    fn power_iteration_matches_dense_on_large_cycle() {
        let n = 80;
        let mut m = DMatrix::<f64>::zeros(n, n);
        for i in 0..n {
            m[(i, (i + 1) % n)] = -1.0;
            m[((i + 1) % n, i)] = -1.0;
            m[(i, i)] = 0.3;
        }
        let dense = SymmetricEigen::new(m.clone())
            .eigenvalues
            .iter()
            .fold(0.0_f64, |a, v| a.max(v.abs()));
        assert_relative_eq!(spectral_radius(&m).unwrap(), dense, max_relative = 1e-9);
    }

    #[test]
    fn non_finite_is_rejected() {
        let m = DMatrix::from_row_slice(1, 1, &[f64::NAN]);
        assert!(matches!(spectral_radius(&m), Err(Error::NonFinite(_))));
    }
}
