//! Kernel regularized least squares in its dual form.

use nalgebra::{DMatrix, DVector};
use sha2::{Digest, Sha256};

use crate::eigen::eig_sym;
use crate::error::{arg_err, Result};
use crate::linalg::solve_spd;

/// Tolerance on symmetry and negative eigenvalues of an input kernel.
const PSD_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct RlsSolution {
    pub alpha: DVector<f64>,
    pub c: f64,
    /// SHA-256 of the labeled kernel block the solution was computed from.
    pub kernel_digest: String,
}

fn kernel_digest(k: &DMatrix<f64>) -> String {
    let mut h = Sha256::new();
    h.update((k.nrows() as u64).to_le_bytes());
    for v in k.iter() {
        h.update(v.to_le_bytes());
    }
    hex::encode(h.finalize())
}

fn ridged(k: &DMatrix<f64>, c: f64) -> DMatrix<f64> {
    let mut a = k.clone();
    for i in 0..a.nrows() {
        a[(i, i)] += 1.0 / c;
    }
    a
}

fn check_system(k: &DMatrix<f64>, y: &DVector<f64>, c: f64) -> Result<()> {
    if !(c > 0.0 && c.is_finite()) {
        return Err(arg_err!("C must be positive, got {c}"));
    }
    if !k.is_square() || k.nrows() != y.len() {
        return Err(arg_err!("kernel {:?} does not match {} labels", k.shape(), y.len()));
    }
    Ok(())
}

/// `α = (K_ll + I/C)⁻¹ y_l`.
pub fn rls_solve(k_ll: &DMatrix<f64>, y_l: &DVector<f64>, c: f64) -> Result<RlsSolution> {
    check_system(k_ll, y_l, c)?;
    let scale = 1.0 + k_ll.amax();
    if (k_ll - k_ll.transpose()).amax() > PSD_TOL * scale {
        return Err(arg_err!("kernel is not symmetric"));
    }
    if k_ll.nrows() > 0 {
        let min_eig = eig_sym(k_ll)?.values[0];
        if min_eig < -PSD_TOL * scale {
            return Err(arg_err!("kernel is not positive semidefinite (eigenvalue {min_eig:e})"));
        }
    }
    let rhs = DMatrix::from_column_slice(y_l.len(), 1, y_l.as_slice());
    let alpha = solve_spd(&ridged(k_ll, c), &rhs, "RLS system")?.column(0).into_owned();
    Ok(RlsSolution { alpha, c, kernel_digest: kernel_digest(k_ll) })
}

/// Dual objective `αᵀy - ½ αᵀ(K_ll + I/C)α`.
pub fn rls_dual_objective(sol: &RlsSolution, k_ll: &DMatrix<f64>, y_l: &DVector<f64>) -> Result<f64> {
    check_system(k_ll, y_l, sol.c)?;
    if sol.alpha.len() != y_l.len() {
        return Err(arg_err!("{} dual variables for {} labels", sol.alpha.len(), y_l.len()));
    }
    let a = &sol.alpha;
    Ok(a.dot(y_l) - 0.5 * a.dot(&(ridged(k_ll, sol.c) * a)))
}

/// Gradient of the dual objective, `y - (K_ll + I/C)α`.
pub fn rls_dual_gradient(alpha: &DVector<f64>, k_ll: &DMatrix<f64>, y_l: &DVector<f64>, c: f64) -> Result<DVector<f64>> {
    check_system(k_ll, y_l, c)?;
    Ok(y_l - ridged(k_ll, c) * alpha)
}

/// Optimal dual value `½ yᵀ(K_ll + I/C)⁻¹y`, via a factorized solve.
pub fn rls_optimal_value(k_ll: &DMatrix<f64>, y_l: &DVector<f64>, c: f64) -> Result<f64> {
    check_system(k_ll, y_l, c)?;
    let rhs = DMatrix::from_column_slice(y_l.len(), 1, y_l.as_slice());
    let x = solve_spd(&ridged(k_ll, c), &rhs, "RLS system")?;
    Ok(0.5 * x.column(0).dot(y_l))
}

/// Decision values `K_ul α`.
pub fn rls_predict(k_ul: &DMatrix<f64>, sol: &RlsSolution) -> Result<DVector<f64>> {
    if k_ul.ncols() != sol.alpha.len() {
        return Err(arg_err!(
            "kernel block has {} columns, solution has {} dual variables",
            k_ul.ncols(),
            sol.alpha.len()
        ));
    }
    Ok(k_ul * &sol.alpha)
}

/// Bandwidth `σ = (1/n) Σ ‖x_i‖` of the baseline Gaussian kernel.
pub fn mean_norm_bandwidth(features: &DMatrix<f64>) -> f64 {
    let n = features.nrows().max(1) as f64;
    features.row_iter().map(|r| r.norm()).sum::<f64>() / n
}

/// Gaussian kernel `exp(-‖x_i - x_j‖² / (2σ²))` between selected rows.
pub fn gaussian_kernel(features: &DMatrix<f64>, rows: &[usize], cols: &[usize], sigma: f64) -> Result<DMatrix<f64>> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(arg_err!("Gaussian bandwidth must be positive, got {sigma}"));
    }
    let denom = 2.0 * sigma * sigma;
    Ok(DMatrix::from_fn(rows.len(), cols.len(), |i, j| {
        let d2 = (features.row(rows[i]) - features.row(cols[j])).norm_squared();
        (-d2 / denom).exp()
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_psd(n: usize, rng: &mut impl Rng) -> DMatrix<f64> {
        let m = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        &m * m.transpose()
    }

    /// Gaussian elimination with partial pivoting, independent of the
    /// Cholesky path under test.
    fn gauss_solve(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
        let n = b.len();
        let mut m = a.clone().insert_column(n, 0.0);
        m.column_mut(n).copy_from(b);
        for col in 0..n {
            let piv = (col..n).max_by(|&i, &j| m[(i, col)].abs().total_cmp(&m[(j, col)].abs())).unwrap();
            m.swap_rows(col, piv);
            for r in (col + 1)..n {
                let f = m[(r, col)] / m[(col, col)];
                for k in col..=n {
                    m[(r, k)] -= f * m[(col, k)];
                }
            }
        }
        let mut x = DVector::zeros(n);
        for r in (0..n).rev() {
            let s: f64 = ((r + 1)..n).map(|k| m[(r, k)] * x[k]).sum();
            x[r] = (m[(r, n)] - s) / m[(r, r)];
        }
        x
    }

    #[test]
    fn scalar_case() {
        let k = DMatrix::from_element(1, 1, 1.0);
        let y = DVector::from_element(1, 1.0);
        let sol = rls_solve(&k, &y, 1.0).unwrap();
        assert!((sol.alpha[0] - 0.5).abs() < 1e-15);
        let obj = rls_dual_objective(&sol, &k, &y).unwrap();
        assert!((obj - 0.25).abs() < 1e-15);
        assert!((rls_optimal_value(&k, &y, 1.0).unwrap() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn zero_kernel_is_pure_ridge() {
        let k = DMatrix::zeros(3, 3);
        let y = DVector::from_vec(vec![1.0, -1.0, 1.0]);
        let sol = rls_solve(&k, &y, 4.0).unwrap();
        assert!((&sol.alpha - &y * 4.0).amax() < 1e-12);
        assert!((rls_optimal_value(&k, &y, 4.0).unwrap() - 0.5 * 4.0 * 3.0).abs() < 1e-12);
        let zero = DVector::zeros(3);
        let at_zero = RlsSolution { alpha: zero, ..sol };
        assert_eq!(rls_dual_objective(&at_zero, &k, &y).unwrap(), 0.0);
    }

    #[test]
    fn matches_gaussian_elimination() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..20 {
            let k = random_psd(5, &mut rng);
            let y = DVector::from_fn(5, |_, _| if rng.random_bool(0.5) { 1.0 } else { -1.0 });
            let c = rng.random_range(0.1..10.0);
            let sol = rls_solve(&k, &y, c).unwrap();
            let oracle = gauss_solve(&ridged(&k, c), &y);
            assert!((&sol.alpha - oracle).amax() < 1e-10);
            let resid = rls_dual_gradient(&sol.alpha, &k, &y, c).unwrap().amax();
            assert!(resid <= 1e-8 * (1.0 + y.amax()));
        }
    }

    #[test]
    fn optimum_beats_perturbations() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let k = random_psd(6, &mut rng);
        let y = DVector::from_fn(6, |_, _| rng.random_range(-1.0..1.0));
        let sol = rls_solve(&k, &y, 2.0).unwrap();
        let best = rls_dual_objective(&sol, &k, &y).unwrap();
        for _ in 0..50 {
            let d = DVector::from_fn(6, |_, _| rng.random_range(-1.0..1.0)).normalize() * 1e-3;
            let moved = RlsSolution { alpha: &sol.alpha + d, ..sol.clone() };
            assert!(rls_dual_objective(&moved, &k, &y).unwrap() <= best);
        }
    }

    #[test]
    fn optimal_value_decreases_with_kernel_eigenvalues() {
        let y = DVector::from_vec(vec![1.0, -1.0, 0.5]);
        let mut prev = f64::INFINITY;
        for t in [0.0, 0.1, 1.0, 10.0, 100.0] {
            let k = DMatrix::from_diagonal(&DVector::from_vec(vec![t, 1.0, 2.0]));
            let v = rls_optimal_value(&k, &y, 1.0).unwrap();
            assert!(v <= prev);
            prev = v;
        }
    }

    #[test]
    fn predict_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let x = DMatrix::from_fn(8, 2, |_, _| rng.random_range(-2.0..2.0));
        let all: Vec<usize> = (0..8).collect();
        let k = gaussian_kernel(&x, &all, &all, 0.7).unwrap();
        let y = DVector::from_fn(8, |i, _| if i % 2 == 0 { 1.0 } else { -1.0 });
        let sol = rls_solve(&k, &y, 1e8).unwrap();
        // interpolation regime reproduces labels
        let f = rls_predict(&k, &sol).unwrap();
        assert!((f - &y).amax() < 1e-4);

        assert_eq!(rls_predict(&DMatrix::zeros(3, 8), &sol).unwrap(), DVector::zeros(3));
        assert!(rls_predict(&DMatrix::zeros(3, 7), &sol).is_err());

        let ones = DVector::from_element(8, 1.0);
        let sol = rls_solve(&k, &ones, 1.0).unwrap();
        let ku = gaussian_kernel(&x, &[0, 3], &all, 0.7).unwrap();
        assert!(rls_predict(&ku, &sol).unwrap().iter().all(|&v| v > 0.0));
    }

    #[test]
    fn rejects_indefinite_kernel() {
        let k = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        let y = DVector::from_vec(vec![1.0, 1.0]);
        assert!(rls_solve(&k, &y, 1.0).is_err());
        assert!(rls_solve(&DMatrix::identity(2, 2), &y, 0.0).is_err());
    }

    #[test]
    fn bandwidth_is_mean_norm() {
        let x = DMatrix::from_row_slice(2, 2, &[3.0, 4.0, 0.0, 1.0]);
        assert_eq!(mean_norm_bandwidth(&x), 3.0);
    }
}
