//! Brute-force reference computations for the closed forms in [`crate::skl`].
//!
//! Nothing here calls into `skl`'s solvers: minimizers and alignment
//! searches work directly from the definitions. Only the coefficient data
//! type is shared.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{arg_err, Result, SklError};
use crate::graph::{normalized_laplacian, Graph};
use crate::skl::SpectralCoefficients;

const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Golden-section minimization of a unimodal `f` on `[lo, hi]` until the
/// bracket is narrower than `tol`. The endpoints are compared as well so
/// boundary minima are returned exactly.
pub fn golden_section_min(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let (a0, b0) = (lo, hi);
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    while hi - lo > tol {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = f(x2);
        }
        if x1 == x2 {
            break;
        }
    }
    let mid = 0.5 * (lo + hi);
    [a0, b0, mid]
        .into_iter()
        .min_by(|&a, &b| f(a).total_cmp(&f(b)))
        .unwrap()
}

/// Coordinate-wise numeric minimizer of `½ Σ a_i/(λ_i + 1/C) + μ Σ λ_i b_i`
/// over `λ ≥ 0`.
///
/// Each term is convex in `λ_i`; the bracket is grown by doubling until the
/// term stops decreasing, then refined by golden-section search to `1e-10`
/// relative to the bracket.
pub fn minimize_f_numeric(co: &SpectralCoefficients, mu: f64, c: f64) -> Vec<f64> {
    co.a.iter()
        .zip(&co.b)
        .map(|(&a, &b)| {
            if a == 0.0 {
                return 0.0;
            }
            let term = |l: f64| 0.5 * a / (l + 1.0 / c) + mu * b * l;
            let mut hi = 1.0;
            while term(2.0 * hi) < term(hi) {
                hi *= 2.0;
            }
            let hi = 2.0 * hi;
            golden_section_min(term, 0.0, hi, 1e-10 * hi.max(1.0))
        })
        .collect()
}

/// Alignment of `max(0, r_i/√μ - 1/C)` computed straight from its definition,
/// or `None` when every coordinate is clipped.
fn projected_alignment(co: &SpectralCoefficients, mu: f64, c: f64) -> Option<f64> {
    let mut inner = 0.0;
    let mut norm_sq = 0.0;
    for (&a, &b) in co.a.iter().zip(&co.b) {
        let l = ((a / (2.0 * mu * b)).sqrt() - 1.0 / c).max(0.0);
        inner += l * a;
        norm_sq += l * l;
    }
    (norm_sq > 0.0).then(|| inner / (norm_sq * co.label_gram).sqrt())
}

/// Grid-then-golden-section search for the μ maximizing alignment.
///
/// 200 log-spaced points over `[1e-12, 1e6]`, then golden-section in `log μ`
/// around the best cell down to `1e-6` relative in μ. Returns
/// `(mu_best, kta_best)`; constant alignment over the grid is reported as a
/// degenerate instance.
pub fn maximize_kta_grid(co: &SpectralCoefficients, c: f64) -> Result<(f64, f64)> {
    if c.is_nan() || c <= 0.0 {
        return Err(arg_err!("C must be positive"));
    }
    const POINTS: usize = 200;
    let (lo, hi) = (1e-12f64.ln(), 1e6f64.ln());
    let grid: Vec<f64> = (0..POINTS)
        .map(|i| lo + (hi - lo) * i as f64 / (POINTS - 1) as f64)
        .collect();
    let score = |log_mu: f64| projected_alignment(co, log_mu.exp(), c).unwrap_or(f64::NEG_INFINITY);
    let values: Vec<f64> = grid.iter().map(|&g| score(g)).collect();

    let defined: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
    let vmax = defined.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let vmin = defined.iter().copied().fold(f64::INFINITY, f64::min);
    if defined.is_empty() || vmax - vmin <= 1e-12 * vmax.abs() {
        return Err(SklError::Degenerate("alignment is constant in mu over the search grid".into()));
    }

    let best = (0..POINTS).max_by(|&i, &j| values[i].total_cmp(&values[j])).unwrap();
    let left = grid[best.saturating_sub(1)];
    let right = grid[(best + 1).min(POINTS - 1)];
    // 1e-6 relative in mu is 1e-6 absolute in log mu
    let log_mu = golden_section_min(|t| -score(t), left, right, 1e-7);
    let mu = log_mu.exp();
    Ok((mu, score(log_mu)))
}

/// `y_lᵀ (K + I/C)⁻¹ y - y_lᵀ (K_ll + I/C)⁻¹ y_l` for `y = [y_l; 0]` and the
/// labeled block taken as the first `y_l.len()` rows and columns.
pub fn upper_bound_slack(k: &DMatrix<f64>, y_l: &DVector<f64>, c: f64) -> Result<f64> {
    let n = k.nrows();
    let n_l = y_l.len();
    if n_l > n {
        return Err(arg_err!("more labels than points"));
    }
    let quad = |m: DMatrix<f64>, v: &DVector<f64>| -> Result<f64> {
        let mut m = m;
        for i in 0..m.nrows() {
            m[(i, i)] += 1.0 / c;
        }
        let chol = m
            .cholesky()
            .ok_or_else(|| SklError::Numerical("bound check system is not positive definite".into()))?;
        Ok(v.dot(&chol.solve(v)))
    };
    let mut y = DVector::zeros(n);
    y.rows_mut(0, n_l).copy_from(y_l);
    let full = quad(k.clone(), &y)?;
    let labeled = quad(k.view((0, 0), (n_l, n_l)).into_owned(), y_l)?;
    Ok(full - labeled)
}

/// Worst bound slack over random `K = MMᵀ` with standard normal `M` and
/// random ±1 labels. Trial `t` draws from seed `seed + t`.
pub fn check_upper_bound(n: usize, n_l: usize, c: f64, trials: usize, seed: u64) -> Result<f64> {
    if trials == 0 {
        return Err(arg_err!("need at least one trial"));
    }
    let slacks: Vec<f64> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(t as u64));
            let m = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
            let k = &m * m.transpose();
            let y = DVector::from_fn(n_l, |_, _| if rng.random_bool(0.5) { 1.0 } else { -1.0 });
            upper_bound_slack(&k, &y, c)
        })
        .collect::<Result<_>>()?;
    Ok(slacks.into_iter().fold(f64::INFINITY, f64::min))
}

/// Residual of `Σ_ij S_ij ‖v_i/√d_i - v_j/√d_j‖² = 2 tr(Vᵀ L V)` for the rows
/// `v_i` of `V`, scaled by `1 + |tr(Vᵀ L V)|`.
pub fn regularizer_identity(v: &DMatrix<f64>, s: &Graph) -> Result<f64> {
    if v.nrows() != s.len() {
        return Err(arg_err!("embedding has {} rows for {} vertices", v.nrows(), s.len()));
    }
    let d = s.degrees();
    let mut lhs = 0.0;
    for i in 0..s.len() {
        for &(j, w) in s.neighbors(i) {
            let diff = v.row(i) / d[i].sqrt() - v.row(j) / d[j].sqrt();
            lhs += w * diff.norm_squared();
        }
    }
    let l = normalized_laplacian(s)?;
    let tr = (v.transpose() * &l.matrix * v).trace();
    Ok((lhs - 2.0 * tr).abs() / (1.0 + tr.abs()))
}

/// Random coefficients: `a_i` squared standard normals, `b_i = |z| + 1e-3`,
/// label Gram norm `Σ a_i²` (the smallest value keeping alignment ≤ 1).
pub fn random_coefficients(n: usize, rng: &mut impl Rng) -> SpectralCoefficients {
    let a: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal).powi(2)).collect();
    let b = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal).abs() + 1e-3).collect();
    let label_gram = a.iter().map(|x| x * x).sum();
    SpectralCoefficients { a, b, n_labeled: n, label_gram }
}
