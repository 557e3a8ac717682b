//! Factorized solves shared by the RLS and spectral-kernel readouts.

use nalgebra::DMatrix;

use crate::error::{Result, SklError};

/// Relative residual accepted from a positive-definite solve.
pub const SOLVE_RESIDUAL_TOL: f64 = 1e-6;

/// Solves `A X = B` for symmetric positive-definite `A` by Cholesky.
///
/// The residual `‖AX - B‖_F` must stay within `1e-6 ‖B‖_F`. On failure the
/// system is retried once with `A + (1e-10 tr(A)/n) I`; a second failure is a
/// numerical error.
pub fn solve_spd(a: &DMatrix<f64>, b: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    if let Some(x) = try_solve(a, b) {
        return Ok(x);
    }
    let n = a.nrows();
    let ridge = 1e-10 * a.trace() / n.max(1) as f64;
    if ridge > 0.0 && ridge.is_finite() {
        let mut ridged = a.clone();
        for i in 0..n {
            ridged[(i, i)] += ridge;
        }
        if let Some(x) = try_solve(&ridged, b) {
            log::debug!("{what}: solved after adding ridge {ridge:e}");
            return Ok(x);
        }
    }
    Err(SklError::Numerical(format!(
        "{what}: {n}x{n} system is singular or indefinite"
    )))
}

fn try_solve(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let x = a.clone().cholesky()?.solve(b);
    let scale = b.norm().max(f64::MIN_POSITIVE);
    let residual = (a * &x - b).norm();
    (x.iter().all(|v| v.is_finite()) && residual <= SOLVE_RESIDUAL_TOL * scale).then_some(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_spd_system() {
        let a = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0]);
        let b = DMatrix::from_row_slice(2, 1, &[1.0, 2.0]);
        let x = solve_spd(&a, &b, "test").unwrap();
        assert!((&a * &x - &b).amax() < 1e-14);
    }

    #[test]
    fn zero_matrix_is_numerical_error() {
        let a = DMatrix::zeros(3, 3);
        let b = DMatrix::from_element(3, 1, 1.0);
        assert!(matches!(solve_spd(&a, &b, "test"), Err(SklError::Numerical(_))));
    }

    #[test]
    fn semidefinite_retries_with_ridge() {
        // rank one, consistent right-hand side
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let b = DMatrix::from_row_slice(2, 1, &[1.0, 1.0]);
        let x = solve_spd(&a, &b, "test").unwrap();
        assert!((&a * &x - &b).norm() < 1e-6 * b.norm());
    }
}
