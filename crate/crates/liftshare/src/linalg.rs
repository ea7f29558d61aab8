//! Small dense linear algebra used by the regression fitters.

/// Solves the symmetric positive definite system `A x = b` in place via
/// Cholesky factorization. `a` is row-major `k x k`. Returns `None` when the
/// matrix is not positive definite (rank deficient within tolerance).
pub(crate) fn solve_spd(a: &[f64], b: &[f64], k: usize) -> Option<Vec<f64>> {
    debug_assert_eq!(a.len(), k * k);
    debug_assert_eq!(b.len(), k);
    let mut chol = vec![0.0; k * k];
    // Scale-aware pivot floor: treat pivots below ~1e-12 of the largest
    // diagonal entry as rank deficiency.
    let max_diag = (0..k).fold(0.0f64, |m, i| m.max(a[i * k + i].abs()));
    let floor = max_diag.max(1.0) * 1e-12;
    for i in 0..k {
        for j in 0..=i {
            let mut sum = a[i * k + j];
            for p in 0..j {
                sum -= chol[i * k + p] * chol[j * k + p];
            }
            if i == j {
                if sum <= floor {
                    return None;
                }
                chol[i * k + i] = sum.sqrt();
            } else {
                chol[i * k + j] = sum / chol[j * k + j];
            }
        }
    }
    // Forward then backward substitution.
    let mut x = b.to_vec();
    for i in 0..k {
        for p in 0..i {
            x[i] -= chol[i * k + p] * x[p];
        }
        x[i] /= chol[i * k + i];
    }
    for i in (0..k).rev() {
        for p in (i + 1)..k {
            x[i] -= chol[p * k + i] * x[p];
        }
        x[i] /= chol[i * k + i];
    }
    Some(x)
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
