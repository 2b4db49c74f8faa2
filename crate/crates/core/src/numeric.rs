//! Small dense linear-algebra helpers shared across the crate.

use nalgebra::{DMatrix, DVector};

/// Spectral radius of a (generally nonsymmetric) square matrix.
pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    assert!(m.is_square(), "spectral_radius requires a square matrix");
    m.complex_eigenvalues()
        .iter()
        .map(|c| c.norm())
        .fold(0.0, f64::max)
}

/// Smallest eigenvalue of a symmetric matrix. The input is symmetrized
/// first so that tiny asymmetries from floating-point products do not
/// upset the eigensolver.
pub fn sym_min_eig(m: &DMatrix<f64>) -> f64 {
    assert!(m.is_square());
    let sym = 0.5 * (m + m.transpose());
    nalgebra::SymmetricEigen::new(sym)
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Report from a numerical rank computation.
#[derive(Debug, Clone)]
pub struct RankReport {
    pub rank: usize,
    /// Smallest singular value counted as nonzero (0 when rank is 0).
    pub smallest_retained: f64,
    pub largest: f64,
    pub threshold: f64,
}

/// Numerical rank via singular values, thresholded at
/// `max(rows, cols) * eps * sigma_max`.
pub fn numerical_rank(m: &DMatrix<f64>) -> RankReport {
    let svd = m.clone().svd(false, false);
    let mut sv: Vec<f64> = svd.singular_values.iter().copied().collect();
    sv.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let largest = sv.first().copied().unwrap_or(0.0);
    let threshold = m.nrows().max(m.ncols()) as f64 * f64::EPSILON * largest;
    let rank = sv.iter().filter(|&&s| s > threshold).count();
    let smallest_retained = if rank > 0 { sv[rank - 1] } else { 0.0 };
    RankReport {
        rank,
        smallest_retained,
        largest,
        threshold,
    }
}

/// 2-norm condition number estimate from singular values.
/// Returns `f64::INFINITY` for numerically singular matrices.
pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    let svd = m.clone().svd(false, false);
    let max = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let min = svd
        .singular_values
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    if min <= 0.0 || !min.is_finite() {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Largest singular value.
pub fn sigma_max(m: &DMatrix<f64>) -> f64 {
    m.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .copied()
        .fold(0.0, f64::max)
}

/// Symmetric inverse square root via eigendecomposition.
/// Requires a symmetric positive definite input.
pub fn sym_inv_sqrt(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    assert!(m.is_square());
    let sym = 0.5 * (m + m.transpose());
    let eig = nalgebra::SymmetricEigen::new(sym);
    if eig.eigenvalues.iter().any(|&l| l <= 0.0) {
        return None;
    }
    let inv_sqrt = DVector::from_iterator(
        eig.eigenvalues.len(),
        eig.eigenvalues.iter().map(|&l| 1.0 / l.sqrt()),
    );
    Some(&eig.eigenvectors * DMatrix::from_diagonal(&inv_sqrt) * eig.eigenvectors.transpose())
}

/// Solve `a * x = rhs` by LU with a backward-error check.
/// Returns `None` when the factorization fails or the residual exceeds
/// `tol * (1 + ||rhs||)`.
pub fn solve_checked(a: &DMatrix<f64>, rhs: &DVector<f64>, tol: f64) -> Option<DVector<f64>> {
    let x = a.clone().lu().solve(rhs)?;
    if !x.iter().all(|v| v.is_finite()) {
        return None;
    }
    let residual = (a * &x - rhs).norm();
    if residual <= tol * (1.0 + rhs.norm()) {
        Some(x)
    } else {
        None
    }
}

/// Max-abs entry of a matrix.
pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().map(|v| v.abs()).fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn spectral_radius_of_rotation_is_one() {
        let m = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]);
        assert_relative_eq!(spectral_radius(&m), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn rank_detects_deficiency() {
        let m = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 2.0, 4.0, 6.0]);
        assert_eq!(numerical_rank(&m).rank, 1);
    }

    #[test]
    fn inv_sqrt_squares_back() {
        let m = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0]);
        let s = sym_inv_sqrt(&m).unwrap();
        let id = &s * &m * &s;
        assert_relative_eq!(id[(0, 0)], 1.0, epsilon = 1e-12);
        assert_relative_eq!(id[(0, 1)], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn solve_checked_rejects_singular() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let rhs = DVector::from_vec(vec![1.0, 2.0]);
        assert!(solve_checked(&a, &rhs, 1e-10).is_none());
    }
}
