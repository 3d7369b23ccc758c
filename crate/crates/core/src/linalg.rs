//! Small dense linear-algebra helpers shared by the filters.

use nalgebra::Cholesky;
use nalgebra::Dyn;

use crate::error::{Error, Result};
use crate::{Matrix, Vector};

/// `ln(2π)`.
pub const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Relative jitter added to the diagonal on a failed Cholesky factorization.
pub const JITTER: f64 = 1e-9;

/// Minimum eigenvalue tolerated for a covariance that should be PSD.
pub const PSD_TOLERANCE: f64 = -1e-9;

/// Replaces `m` with `(m + m') / 2`.
pub fn symmetrize(m: &mut Matrix) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let s = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = s;
            m[(j, i)] = s;
        }
    }
}

pub fn symmetrized(mut m: Matrix) -> Matrix {
    symmetrize(&mut m);
    m
}

/// Largest absolute asymmetry `|m_ij - m_ji|`.
pub fn asymmetry(m: &Matrix) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0_f64;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

pub fn is_square(m: &Matrix) -> bool {
    m.nrows() == m.ncols()
}

/// Smallest eigenvalue of the symmetric part of `m`.
pub fn min_eigenvalue(m: &Matrix) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    if m.nrows() == 1 {
        return m[(0, 0)];
    }
    symmetrized(m.clone()).symmetric_eigen().eigenvalues.min()
}

/// Numerical rank via singular values, threshold `max(rows, cols) * eps * σ_max`.
pub fn numerical_rank(m: &Matrix) -> usize {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0;
    }
    let sv = m.clone().svd(false, false).singular_values;
    let smax = sv.max();
    if smax == 0.0 {
        return 0;
    }
    let tol = m.nrows().max(m.ncols()) as f64 * f64::EPSILON * smax;
    sv.iter().filter(|&&s| s > tol).count()
}

/// Cholesky factor of a symmetric matrix that should be positive definite.
///
/// On failure the diagonal is loaded once with `JITTER * trace / dim` and the
/// factorization retried; a second failure is a conditioning error.
pub fn spd_cholesky(m: &Matrix, what: &'static str) -> Result<Cholesky<f64, Dyn>> {
    if let Some(ch) = Cholesky::new(m.clone()) {
        return Ok(ch);
    }
    let dim = m.nrows().max(1) as f64;
    let bump = JITTER * (m.trace().abs() / dim).max(f64::MIN_POSITIVE);
    let mut jittered = m.clone();
    for i in 0..m.nrows() {
        jittered[(i, i)] += bump;
    }
    Cholesky::new(jittered).ok_or(Error::Conditioning { what })
}

/// `ln det` from a Cholesky factor.
pub fn chol_logdet(ch: &Cholesky<f64, Dyn>) -> f64 {
    let l = ch.l_dirty();
    (0..l.nrows()).map(|i| libm::log(l[(i, i)])).sum::<f64>() * 2.0
}

/// Inverse of an SPD matrix through its Cholesky factor, symmetrized.
pub fn chol_inverse(ch: &Cholesky<f64, Dyn>) -> Matrix {
    symmetrized(ch.inverse())
}

/// `ln N(r; 0, S)` given the Cholesky factor of `S`.
pub fn gaussian_logpdf_residual(residual: &Vector, ch: &Cholesky<f64, Dyn>) -> f64 {
    let white = ch
        .l_dirty()
        .solve_lower_triangular(residual)
        .unwrap_or_else(|| Vector::from_element(residual.len(), f64::INFINITY));
    let p = residual.len() as f64;
    -0.5 * (p * LN_2PI + chol_logdet(ch) + white.norm_squared())
}

/// Block-diagonal `diag(a, b)`.
pub fn block_diag(a: &Matrix, b: &Matrix) -> Matrix {
    let (n, m) = (a.nrows(), b.nrows());
    let mut out = Matrix::zeros(n + m, n + m);
    out.view_mut((0, 0), (n, n)).copy_from(a);
    out.view_mut((n, n), (m, m)).copy_from(b);
    out
}

/// Stacks `[a; b]`.
pub fn stack(a: &Vector, b: &Vector) -> Vector {
    let mut out = Vector::zeros(a.len() + b.len());
    out.rows_mut(0, a.len()).copy_from(a);
    out.rows_mut(a.len(), b.len()).copy_from(b);
    out
}

/// Log-sum-exp of a slice, returning `-inf` for an empty or all `-inf` input.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + libm::log(values.iter().map(|v| libm::exp(v - max)).sum::<f64>())
}

/// Normalizes log-weights into probabilities summing to one.
pub fn normalize_log_weights(log_weights: &[f64]) -> alloc::vec::Vec<f64> {
    // shift by the maximum first so the largest weight is exact
    let max = log_weights
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    let shifted: alloc::vec::Vec<f64> = log_weights.iter().map(|w| w - max).collect();
    let lse = log_sum_exp(&shifted);
    shifted.iter().map(|w| libm::exp(w - lse)).collect()
}
