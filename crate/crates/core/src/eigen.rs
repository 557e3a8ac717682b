//! Dense symmetric eigendecomposition.
//!
//! Householder reduction to tridiagonal form followed by the implicit-shift
//! QL iteration (the EISPACK `tred2`/`tql2` pair, by way of JAMA). Work is
//! done on a row-major scratch buffer; the result is returned as nalgebra
//! matrices with eigenvalues ascending and each eigenvector's largest-magnitude
//! entry made positive.

use nalgebra::{DMatrix, DVector};

use crate::error::{arg_err, Result, SklError};

/// Maximum QL sweeps spent on a single eigenvalue before giving up.
const MAX_SWEEPS: usize = 60;

/// Orthonormal eigenvectors (columns of `vectors`) with ascending `values`.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenSystem {
    pub vectors: DMatrix<f64>,
    pub values: DVector<f64>,
}

impl EigenSystem {
    pub fn new(vectors: DMatrix<f64>, values: DVector<f64>) -> Result<Self> {
        if !vectors.is_square() || vectors.nrows() != values.len() {
            return Err(arg_err!(
                "eigenvector matrix {}x{} does not match {} eigenvalues",
                vectors.nrows(),
                vectors.ncols(),
                values.len()
            ));
        }
        Ok(Self { vectors, values })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    /// Rows of `U` at the given point indices (`U_l` for the labeled set).
    pub fn rows(&self, indices: &[usize]) -> DMatrix<f64> {
        self.vectors.select_rows(indices.iter())
    }

    /// `U diag(values) Uᵀ`.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let mut scaled = self.vectors.clone();
        for (mut col, &v) in scaled.column_iter_mut().zip(self.values.iter()) {
            col *= v;
        }
        &scaled * self.vectors.transpose()
    }
}

/// Full eigendecomposition of a symmetric matrix.
///
/// The input is symmetrized as `(M + Mᵀ)/2`; asymmetry beyond `1e-10`
/// relative to the largest entry is rejected.
pub fn eig_sym(m: &DMatrix<f64>) -> Result<EigenSystem> {
    if !m.is_square() {
        return Err(arg_err!("matrix is {}x{}, not square", m.nrows(), m.ncols()));
    }
    let n = m.nrows();
    if m.iter().any(|v| !v.is_finite()) {
        return Err(arg_err!("matrix has non-finite entries"));
    }
    let scale = m.amax();
    let mut asym = 0.0f64;
    for i in 0..n {
        for j in 0..i {
            asym = asym.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    if asym > 1e-10 * scale.max(f64::MIN_POSITIVE) && asym > 0.0 {
        return Err(arg_err!(
            "matrix is not symmetric (max |M - Mᵀ| = {asym:e}, max |M| = {scale:e})"
        ));
    }
    if n == 0 {
        return EigenSystem::new(DMatrix::zeros(0, 0), DVector::zeros(0));
    }

    let mut v = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            v[i * n + j] = 0.5 * (m[(i, j)] + m[(j, i)]);
        }
    }
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n];
    tridiagonalize(n, &mut v, &mut d, &mut e);
    ql_implicit(n, &mut v, &mut d, &mut e)?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| d[a].total_cmp(&d[b]));

    let values = DVector::from_iterator(n, order.iter().map(|&k| d[k]));
    let mut vectors = DMatrix::from_fn(n, n, |i, j| v[i * n + order[j]]);
    normalize_signs(&mut vectors);
    EigenSystem::new(vectors, values)
}

/// Flips each column so that its largest-magnitude entry is positive
/// (first such entry on ties).
pub fn normalize_signs(vectors: &mut DMatrix<f64>) {
    for mut col in vectors.column_iter_mut() {
        let mut best = 0.0f64;
        let mut sign = 1.0;
        for &x in col.iter() {
            if x.abs() > best {
                best = x.abs();
                sign = x.signum();
            }
        }
        if sign < 0.0 {
            col.neg_mut();
        }
    }
}

/// Householder reduction of the row-major symmetric matrix `v` to tridiagonal
/// form. On exit `d` holds the diagonal, `e[1..]` the subdiagonal, and `v`
/// the accumulated orthogonal transformation.
fn tridiagonalize(n: usize, v: &mut [f64], d: &mut [f64], e: &mut [f64]) {
    let at = |i: usize, j: usize| i * n + j;

    for j in 0..n {
        d[j] = v[at(n - 1, j)];
    }

    for i in (1..n).rev() {
        let mut scale = 0.0;
        let mut h = 0.0;
        for dk in d.iter().take(i) {
            scale += dk.abs();
        }
        if scale == 0.0 {
            e[i] = d[i - 1];
            for j in 0..i {
                d[j] = v[at(i - 1, j)];
                v[at(i, j)] = 0.0;
                v[at(j, i)] = 0.0;
            }
        } else {
            for dk in d.iter_mut().take(i) {
                *dk /= scale;
                h += *dk * *dk;
            }
            let mut f = d[i - 1];
            let mut g = h.sqrt();
            if f > 0.0 {
                g = -g;
            }
            e[i] = scale * g;
            h -= f * g;
            d[i - 1] = f - g;
            for ej in e.iter_mut().take(i) {
                *ej = 0.0;
            }

            for j in 0..i {
                f = d[j];
                v[at(j, i)] = f;
                g = e[j] + v[at(j, j)] * f;
                for k in (j + 1)..i {
                    g += v[at(k, j)] * d[k];
                    e[k] += v[at(k, j)] * f;
                }
                e[j] = g;
            }
            f = 0.0;
            for j in 0..i {
                e[j] /= h;
                f += e[j] * d[j];
            }
            let hh = f / (h + h);
            for j in 0..i {
                e[j] -= hh * d[j];
            }
            for j in 0..i {
                f = d[j];
                g = e[j];
                for k in j..i {
                    v[at(k, j)] -= f * e[k] + g * d[k];
                }
                d[j] = v[at(i - 1, j)];
                v[at(i, j)] = 0.0;
            }
        }
        d[i] = h;
    }

    for i in 0..n - 1 {
        v[at(n - 1, i)] = v[at(i, i)];
        v[at(i, i)] = 1.0;
        let h = d[i + 1];
        if h != 0.0 {
            for k in 0..=i {
                d[k] = v[at(k, i + 1)] / h;
            }
            for j in 0..=i {
                let mut g = 0.0;
                for k in 0..=i {
                    g += v[at(k, i + 1)] * v[at(k, j)];
                }
                for k in 0..=i {
                    v[at(k, j)] -= g * d[k];
                }
            }
        }
        for k in 0..=i {
            v[at(k, i + 1)] = 0.0;
        }
    }
    for j in 0..n {
        d[j] = v[at(n - 1, j)];
        v[at(n - 1, j)] = 0.0;
    }
    v[at(n - 1, n - 1)] = 1.0;
    e[0] = 0.0;
}

/// Implicit-shift QL on the tridiagonal `(d, e)`, accumulating rotations
/// into the row-major `v`.
fn ql_implicit(n: usize, v: &mut [f64], d: &mut [f64], e: &mut [f64]) -> Result<()> {
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = 0.0;

    let eps = f64::EPSILON;
    let mut f = 0.0;
    let mut tst1 = 0.0f64;
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n - 1 && e[m].abs() > eps * tst1 {
            m += 1;
        }

        if m > l {
            let mut sweeps = 0;
            loop {
                sweeps += 1;
                if sweeps > MAX_SWEEPS {
                    return Err(SklError::Numerical(format!(
                        "QL iteration did not converge for eigenvalue {l} (off-diagonal residual {:e})",
                        e[l].abs()
                    )));
                }

                let mut g = d[l];
                let mut p = (d[l + 1] - g) / (2.0 * e[l]);
                let mut r = p.hypot(1.0);
                if p < 0.0 {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for di in d.iter_mut().skip(l + 2) {
                    *di -= h;
                }
                f += h;

                p = d[m];
                let mut c = 1.0;
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = 0.0;
                let mut s2 = 0.0;
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    g = c * e[i];
                    h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    for row in v.chunks_exact_mut(n) {
                        let hk = row[i + 1];
                        row[i + 1] = s * row[i] + c * hk;
                        row[i] = c * row[i] - s * hk;
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;

                if e[l].abs() <= eps * tst1 {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = 0.0;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_symmetric(n: usize, rng: &mut impl Rng) -> DMatrix<f64> {
        let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        (&a + a.transpose()) * 0.5
    }

    fn check_contract(m: &DMatrix<f64>, es: &EigenSystem) {
        let n = m.nrows();
        let gram = es.vectors.transpose() * &es.vectors;
        let ortho = (gram - DMatrix::<f64>::identity(n, n)).amax();
        assert!(ortho <= 1e-8, "orthonormality residual {ortho:e}");
        let recon = (es.reconstruct() - m).amax();
        assert!(recon <= 1e-7 * (1.0 + m.amax()), "reconstruction residual {recon:e}");
        for w in es.values.as_slice().windows(2) {
            assert!(w[0] <= w[1]);
        }
    }

    #[test]
    fn identity_matrix() {
        let m = DMatrix::<f64>::identity(3, 3);
        let es = eig_sym(&m).unwrap();
        assert_eq!(es.values.as_slice(), &[1.0, 1.0, 1.0]);
        check_contract(&m, &es);
    }

    #[test]
    fn two_by_two_path() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0]);
        let es = eig_sym(&m).unwrap();
        assert!(es.values[0].abs() < 1e-14);
        assert!((es.values[1] - 2.0).abs() < 1e-14);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let u0 = es.vectors.column(0);
        let u1 = es.vectors.column(1);
        assert!((u0[0].abs() - h).abs() < 1e-14 && (u0[0] - u0[1]).abs() < 1e-14);
        assert!((u1[0].abs() - h).abs() < 1e-14 && (u1[0] + u1[1]).abs() < 1e-14);
    }

    #[test]
    fn diagonal_input_permutes_identity() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, 1.0, 2.0]));
        let es = eig_sym(&m).unwrap();
        assert_eq!(es.values.as_slice(), &[1.0, 2.0, 3.0]);
        // largest entry made positive, so columns are exactly e_1, e_2, e_0
        let expected = DMatrix::from_row_slice(3, 3, &[0., 0., 1., 1., 0., 0., 0., 1., 0.]);
        assert_eq!(es.vectors, expected);
    }

    #[test]
    fn rejects_non_finite_and_asymmetric() {
        let mut m = DMatrix::<f64>::identity(2, 2);
        m[(0, 1)] = f64::NAN;
        assert!(matches!(eig_sym(&m), Err(SklError::Argument(_))));
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        assert!(matches!(eig_sym(&m), Err(SklError::Argument(_))));
    }

    #[test]
    fn single_and_empty() {
        let es = eig_sym(&DMatrix::from_element(1, 1, -4.0)).unwrap();
        assert_eq!(es.values[0], -4.0);
        assert_eq!(es.vectors[(0, 0)], 1.0);
        assert_eq!(eig_sym(&DMatrix::zeros(0, 0)).unwrap().dim(), 0);
    }

    #[test]
    fn random_matrices_meet_contract() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for n in [2, 5, 17, 64, 150] {
            let m = random_symmetric(n, &mut rng);
            check_contract(&m, &eig_sym(&m).unwrap());
        }
    }

    #[test]
    fn psd_input_has_nonnegative_spectrum() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = DMatrix::from_fn(40, 12, |_, _| rng.random_range(-1.0..1.0));
        let m = &a * a.transpose();
        let es = eig_sym(&m).unwrap();
        assert!(es.values.min() >= -1e-8);
    }

    #[test]
    fn deterministic_signs() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = random_symmetric(20, &mut rng);
        let a = eig_sym(&m).unwrap();
        let b = eig_sym(&m).unwrap();
        assert_eq!(a, b);
        for col in a.vectors.column_iter() {
            let (imax, _) = col.iter().enumerate().fold((0, 0.0f64), |acc, (i, x)| {
                if x.abs() > acc.1 { (i, x.abs()) } else { acc }
            });
            assert!(col[imax] > 0.0);
        }
    }

    /// Real roots of the characteristic cubic via the trigonometric method.
    fn cubic_eigenvalues(m: &DMatrix<f64>) -> [f64; 3] {
        let p1 = m[(0, 1)].powi(2) + m[(0, 2)].powi(2) + m[(1, 2)].powi(2);
        let q = m.trace() / 3.0;
        let p2 = (m[(0, 0)] - q).powi(2) + (m[(1, 1)] - q).powi(2) + (m[(2, 2)] - q).powi(2) + 2.0 * p1;
        let p = (p2 / 6.0).sqrt();
        let b = (m - DMatrix::<f64>::identity(3, 3) * q) / p;
        let r = (b.determinant() / 2.0).clamp(-1.0, 1.0);
        let phi = r.acos() / 3.0;
        let hi = q + 2.0 * p * phi.cos();
        let lo = q + 2.0 * p * (phi + 2.0 * std::f64::consts::PI / 3.0).cos();
        [lo, 3.0 * q - hi - lo, hi]
    }

    #[test]
    fn agrees_with_characteristic_polynomial() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let m = random_symmetric(3, &mut rng);
            let es = eig_sym(&m).unwrap();
            let roots = cubic_eigenvalues(&m);
            for (x, r) in es.values.iter().zip(roots) {
                assert!((x - r).abs() <= 1e-9, "{x} vs {r}");
            }
        }
    }
}
