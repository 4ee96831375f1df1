//! Dense symmetric linear algebra, just enough for squared-exponential
//! kernels on short grids: Cholesky factorization with jitter escalation
//! and triangular solves. Everything is f64 and row-major.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum LinalgError {
    #[error("matrix not positive definite even with jitter up to {max_jitter:e}")]
    NotPositiveDefinite { max_jitter: f64 },
    #[error("dimension mismatch: matrix is {n}x{n}, vector has length {len}")]
    DimensionMismatch { n: usize, len: usize },
}

/// Lower-triangular Cholesky factor of a symmetric positive-definite matrix.
/// Returns `None` when a diagonal pivot is not strictly positive.
pub fn cholesky(a: &[f64], n: usize) -> Option<Vec<f64>> {
    assert_eq!(a.len(), n * n);
    let mut l = vec![0.0f64; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if s <= 0.0 || !s.is_finite() {
                    return None;
                }
                l[i * n + i] = s.sqrt();
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    Some(l)
}

/// Cholesky with escalating diagonal jitter: start at `start`, multiply by 10
/// until `max` is exceeded. Returns the factor and the jitter that worked.
/// A squared-exponential kernel on an integer grid is near-singular, so the
/// bare factorization routinely needs this.
pub fn cholesky_jittered(
    a: &[f64],
    n: usize,
    start: f64,
    max: f64,
) -> Result<(Vec<f64>, f64), LinalgError> {
    if let Some(l) = cholesky(a, n) {
        return Ok((l, 0.0));
    }
    let mut jitter = start;
    while jitter <= max * (1.0 + 1e-12) {
        let mut aj = a.to_vec();
        for i in 0..n {
            aj[i * n + i] += jitter;
        }
        if let Some(l) = cholesky(&aj, n) {
            return Ok((l, jitter));
        }
        jitter *= 10.0;
    }
    Err(LinalgError::NotPositiveDefinite { max_jitter: max })
}

/// Solve `L y = b` (forward substitution), `L` lower triangular.
pub fn solve_lower(l: &[f64], n: usize, b: &[f64]) -> Vec<f64> {
    let mut y = vec![0.0f64; n];
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i * n + k] * y[k];
        }
        y[i] = s / l[i * n + i];
    }
    y
}

/// Solve `Lᵀ x = b` (back substitution), `L` lower triangular.
pub fn solve_lower_transpose(l: &[f64], n: usize, b: &[f64]) -> Vec<f64> {
    let mut x = vec![0.0f64; n];
    for i in (0..n).rev() {
        let mut s = b[i];
        for k in i + 1..n {
            s -= l[k * n + i] * x[k];
        }
        x[i] = s / l[i * n + i];
    }
    x
}

/// Solve `A x = b` given the Cholesky factor `L` of `A`.
pub fn cholesky_solve(l: &[f64], n: usize, b: &[f64]) -> Result<Vec<f64>, LinalgError> {
    if b.len() != n {
        return Err(LinalgError::DimensionMismatch { n, len: b.len() });
    }
    let y = solve_lower(l, n, b);
    Ok(solve_lower_transpose(l, n, &y))
}

/// `L z` for lower-triangular `L` (used to color standard normals).
pub fn lower_matvec(l: &[f64], n: usize, z: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0f64; n];
    for i in 0..n {
        let mut s = 0.0;
        for k in 0..=i {
            s += l[i * n + k] * z[k];
        }
        out[i] = s;
    }
    out
}

/// Squared-exponential kernel matrix `exp(-0.5 (x_a - x_b)^2 / sigma^2)`.
pub fn squared_exp_kernel(xa: &[f64], xb: &[f64], sigma: f64) -> Vec<f64> {
    let s2 = sigma * sigma;
    let mut k = Vec::with_capacity(xa.len() * xb.len());
    for &x in xa {
        for &y in xb {
            let d = x - y;
            k.push((-0.5 * d * d / s2).exp());
        }
    }
    k
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cholesky_recovers_known_factor() {
        // A = L Lᵀ with L = [[2,0],[1,3]]
        let a = vec![4.0, 2.0, 2.0, 10.0];
        let l = cholesky(&a, 2).unwrap();
        assert!((l[0] - 2.0).abs() < 1e-12);
        assert!((l[2] - 1.0).abs() < 1e-12);
        assert!((l[3] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let a = vec![1.0, 2.0, 2.0, 1.0]; // eigenvalues 3, -1
        assert!(cholesky(&a, 2).is_none());
    }

    #[test]
    fn jitter_escalation_rescues_near_singular() {
        // rank-1 matrix; exact factorization fails, jitter succeeds
        let a = vec![1.0, 1.0, 1.0, 1.0];
        let (_, jitter) = cholesky_jittered(&a, 2, 1e-10, 1e-6).unwrap();
        assert!(jitter > 0.0 && jitter <= 1e-6);
    }

    #[test]
    fn solve_round_trips() {
        let a = vec![4.0, 2.0, 2.0, 10.0];
        let l = cholesky(&a, 2).unwrap();
        let b = vec![1.0, -2.0];
        let x = cholesky_solve(&l, 2, &b).unwrap();
        // A x should equal b
        let r0 = 4.0 * x[0] + 2.0 * x[1];
        let r1 = 2.0 * x[0] + 10.0 * x[1];
        assert!((r0 - b[0]).abs() < 1e-12);
        assert!((r1 - b[1]).abs() < 1e-12);
    }

    #[test]
    fn kernel_diagonal_is_one_and_symmetric() {
        let xs: Vec<f64> = (1..=5).map(|i| i as f64).collect();
        let k = squared_exp_kernel(&xs, &xs, 3.0);
        for i in 0..5 {
            assert_eq!(k[i * 5 + i], 1.0);
            for j in 0..5 {
                assert_eq!(k[i * 5 + j], k[j * 5 + i]);
            }
        }
        // hand value: |1-4| = 3, sigma = 3 -> exp(-0.5)
        assert!((k[3] - (-0.5f64).exp()).abs() < 1e-15);
    }
}
