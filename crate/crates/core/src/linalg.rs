//! Small dense solves for symmetric positive definite systems.

use crate::tensor::DenseMatrix;

/// Cholesky factorization A = L L^T. Returns the lower-triangular factor,
/// or None when A is not (numerically) symmetric positive definite.
pub fn cholesky(a: &DenseMatrix) -> Option<DenseMatrix> {
    let n = a.rows();
    if a.cols() != n {
        return None;
    }
    let mut l = DenseMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let mut sum = a.get(i, j);
            for k in 0..j {
                sum -= l.get(i, k) * l.get(j, k);
            }
            if i == j {
                if sum <= 0.0 || !sum.is_finite() {
                    return None;
                }
                l.set(i, j, sum.sqrt());
            } else {
                l.set(i, j, sum / l.get(j, j));
            }
        }
    }
    Some(l)
}

/// Solve L L^T x = b given the Cholesky factor L.
pub fn cholesky_solve(l: &DenseMatrix, b: &[f64]) -> Vec<f64> {
    let n = l.rows();
    debug_assert_eq!(b.len(), n);
    // Forward: L y = b
    let mut y = vec![0.0; n];
    for i in 0..n {
        let mut sum = b[i];
        for k in 0..i {
            sum -= l.get(i, k) * y[k];
        }
        y[i] = sum / l.get(i, i);
    }
    // Backward: L^T x = y
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut sum = y[i];
        for k in (i + 1)..n {
            sum -= l.get(k, i) * x[k];
        }
        x[i] = sum / l.get(i, i);
    }
    x
}

/// Solve A x = b for symmetric positive definite A.
pub fn solve_spd(a: &DenseMatrix, b: &[f64]) -> Option<Vec<f64>> {
    cholesky(a).map(|l| cholesky_solve(&l, b))
}

/// Solve A x = b for symmetric positive semidefinite A, adding a small ridge
/// when the plain factorization fails.
pub fn solve_spd_ridged(a: &DenseMatrix, b: &[f64]) -> Option<Vec<f64>> {
    if let Some(x) = solve_spd(a, b) {
        return Some(x);
    }
    let n = a.rows();
    let scale = (0..n).map(|i| a.get(i, i).abs()).fold(0.0f64, f64::max).max(1.0);
    let mut ridge = 1e-12 * scale;
    for _ in 0..8 {
        let mut shifted = a.clone();
        for i in 0..n {
            shifted.set(i, i, shifted.get(i, i) + ridge);
        }
        if let Some(x) = solve_spd(&shifted, b) {
            return Some(x);
        }
        ridge *= 100.0;
    }
    None
}
