//! Largest-modulus eigenvalue of a sparse non-symmetric matrix.
//!
//! Power iteration alone does not converge when the dominant eigenvalue is a
//! complex-conjugate pair, which is the common case for random directed
//! networks. Each iterate is therefore fitted with a two-term recurrence
//! `A²x ≈ c1·Ax + c0·x`; the roots of `t² − c1·t − c0` are the dominant pair
//! (or the two leading real eigenvalues) once the residual vanishes.

use nalgebra::DMatrix;

use super::sparse::CsrMatrix;

pub const POWER_MAX_ITER: usize = 10_000;
pub const POWER_TOL: f64 = 1e-10;

/// Spectral radius of `m`; power iteration first, dense eigensolve if it does
/// not converge.
pub fn spectral_radius(m: &CsrMatrix) -> f64 {
    power_iteration_radius(m, POWER_MAX_ITER, POWER_TOL).unwrap_or_else(|| dense_spectral_radius(m))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Returns `None` when the recurrence residual has not dropped below `tol`
/// within `max_iter` iterations.
pub fn power_iteration_radius(m: &CsrMatrix, max_iter: usize, tol: f64) -> Option<f64> {
    let n = m.rows();
    assert_eq!(n, m.cols(), "spectral radius needs a square matrix");
    if n == 0 || m.is_zero() {
        return Some(0.0);
    }
    // Deterministic, generic start vector.
    let mut x: Vec<f64> = (0..n).map(|i| 1.0 + ((i as f64) * 0.618_033_988_75).fract()).collect();
    let nx = norm(&x);
    x.iter_mut().for_each(|v| *v /= nx);
    let mut y1 = vec![0.0; n];
    let mut y2 = vec![0.0; n];
    let mut prev = f64::NAN;

    for _ in 0..max_iter {
        m.mul_vec(&x, &mut y1);
        let n1 = norm(&y1);
        if n1 == 0.0 {
            // x landed in the null space; nilpotent part only.
            return Some(0.0);
        }
        m.mul_vec(&y1, &mut y2);
        let n2 = norm(&y2);
        if n2 == 0.0 {
            return Some(0.0);
        }

        let (estimate, residual) = fit_recurrence(&x, &y1, &y2);
        if residual <= tol && (estimate - prev).abs() <= tol * estimate {
            return Some(estimate);
        }
        prev = estimate;

        for (xi, yi) in x.iter_mut().zip(&y1) {
            *xi = yi / n1;
        }
    }
    None
}

/// Returns (largest root modulus, relative residual).
fn fit_recurrence(x: &[f64], y1: &[f64], y2: &[f64]) -> (f64, f64) {
    let n2 = norm(y2);
    let g11 = dot(y1, y1);
    let g10 = dot(y1, x);
    let g00 = dot(x, x);
    let det = g11 * g00 - g10 * g10;

    // One-term fit: y1 ≈ mu x.
    let mu = g10 / g00;
    let res1: f64 = y1
        .iter()
        .zip(x)
        .map(|(a, b)| (a - mu * b).powi(2))
        .sum::<f64>()
        .sqrt()
        / g11.sqrt();
    if det <= 1e-14 * g11 * g00 {
        return (mu.abs(), res1);
    }

    let b1 = dot(y1, y2);
    let b0 = dot(x, y2);
    let c1 = (b1 * g00 - b0 * g10) / det;
    let c0 = (g11 * b0 - g10 * b1) / det;
    let res2 = y2
        .iter()
        .zip(y1)
        .zip(x)
        .map(|((a, b), c)| (a - c1 * b - c0 * c).powi(2))
        .sum::<f64>()
        .sqrt()
        / n2;
    let disc = c1 * c1 + 4.0 * c0;
    let modulus = if disc >= 0.0 {
        let s = disc.sqrt();
        ((c1 + s) / 2.0).abs().max(((c1 - s) / 2.0).abs())
    } else {
        (-c0).sqrt()
    };
    // A converged one-term fit is at least as trustworthy as the pair.
    if res1 <= res2 {
        (mu.abs(), res1)
    } else {
        (modulus, res2)
    }
}

/// Spectral radius from a dense real Schur decomposition.
pub fn dense_spectral_radius(m: &CsrMatrix) -> f64 {
    let n = m.rows();
    if n == 0 {
        return 0.0;
    }
    let dense = DMatrix::from_row_slice(n, m.cols(), &m.to_dense());
    dense
        .complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}
