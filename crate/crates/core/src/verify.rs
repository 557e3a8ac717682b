//! Self-checks of the closed forms against the brute-force oracles, plus the
//! benchmark and sanity runs. Each check is deterministic for a given seed.

use std::sync::Arc;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::dataset::Dataset;
use crate::eigen::{eig_sym, EigenSystem};
use crate::error::Result;
use crate::experiment::{run_experiment, Algorithm, DatasetSource, ExperimentConfig, Generator};
use crate::graph::{laplacian_power, normalized_laplacian, similarity_graph, Graph};
use crate::oracle::{
    check_upper_bound, maximize_kta_grid, minimize_f_numeric, random_coefficients, regularizer_identity,
    upper_bound_slack,
};
use crate::rls::{rls_dual_gradient, rls_dual_objective, rls_optimal_value, rls_solve, RlsSolution};
use crate::skl::{
    fit_skl, fit_skl_kta, kta, lambda_bar, lambda_star, mu_star, spectral_coefficients, SpectralCoefficients,
    TrainingLabels, DEFAULT_RIDGE,
};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

fn timed(name: &'static str, budget: Option<f64>, f: impl FnOnce() -> Result<(bool, String)>) -> Check {
    let t = Instant::now();
    let outcome = f();
    let seconds = t.elapsed().as_secs_f64();
    let (mut passed, mut detail) = outcome.unwrap_or_else(|e| (false, format!("error: {e}")));
    if let Some(limit) = budget {
        if seconds > limit {
            passed = false;
            detail.push_str(&format!("; took {seconds:.2}s, limit {limit}s"));
        }
    }
    Check { name, passed, detail, seconds }
}

fn normal(rng: &mut impl Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// The G50C benchmark: 10 splits of 50 labeled points, `k = 50`, `p = 5`.
pub fn g50c_config(data_seed: u64, split_seed: u64) -> ExperimentConfig {
    ExperimentConfig {
        dataset: DatasetSource::Generated { generator: Generator::G50c, seed: data_seed },
        k: 50,
        p: 5,
        eps: DEFAULT_RIDGE,
        algorithm: Algorithm::SklKta,
        splits: 10,
        n_l: Some(50),
        seed: split_seed,
    }
}

/// Parameter-free accuracy on G50C: mean ≥ 90%, std ≤ 3%, under 60 s.
pub fn check_g50c(seed: u64) -> Check {
    timed("g50c_accuracy", Some(60.0), || {
        let r = run_experiment(&g50c_config(seed, seed))?;
        let (mean, std) = (r.mean_accuracy.unwrap_or(0.0), r.std_accuracy.unwrap_or(f64::INFINITY));
        Ok((mean >= 0.90 && std <= 0.03, format!("accuracy {:.2}% ± {:.2}%", 100.0 * mean, 100.0 * std)))
    })
}

/// `lambda_star` against coordinate-wise numeric minimization.
pub fn check_lambda_star(seed: u64) -> Check {
    timed("lambda_star_vs_numeric", Some(5.0), || {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut worst: f64 = 0.0;
        for _ in 0..100 {
            let co = random_coefficients(rng.random_range(1..=30), &mut rng);
            for c in [0.1, 1.0, 10.0] {
                for mu in [1e-3, 1.0, 1e3] {
                    let closed = lambda_star(&co, mu, c)?;
                    let numeric = minimize_f_numeric(&co, mu, c);
                    let scale = 1.0 + closed.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                    let err = closed.iter().zip(&numeric).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
                    worst = worst.max(err / scale);
                }
            }
        }
        Ok((worst <= 1e-6, format!("worst scaled deviation {worst:.2e} over 900 cases")))
    })
}

/// Draws coefficients until the parameter-free spectrum exceeds 1 in every
/// coordinate, i.e. `lambda_star` at `mu_star` clips nothing, for any C.
fn random_unclipped(rng: &mut impl Rng) -> SpectralCoefficients {
    loop {
        let co = random_coefficients(rng.random_range(2..=30), rng);
        let Ok(bar) = lambda_bar(&co) else { continue };
        if bar.iter().all(|&l| l > 1.0) && mu_star(&co, 1.0).is_ok() {
            return co;
        }
    }
}

/// `mu_star` against a clipping-aware alignment search over μ.
pub fn check_mu_star(seed: u64) -> Check {
    timed("mu_star_vs_grid", Some(10.0), || {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (mut worst_mu, mut worst_gap) = (0.0f64, f64::NEG_INFINITY);
        let (mut failures, mut clipped_winners) = (0, 0);
        for t in 0..50 {
            let co = random_unclipped(&mut rng);
            let c = [0.1, 1.0, 10.0][t % 3];
            let mu = mu_star(&co, c)?;
            let at_mu = kta(&co, &lambda_star(&co, mu, c)?)?;
            let (grid_mu, grid_kta) = maximize_kta_grid(&co, c)?;
            let rel = ((mu - grid_mu) / mu).abs();
            let gap = grid_kta - at_mu;
            worst_mu = worst_mu.max(rel);
            worst_gap = worst_gap.max(gap);
            if rel > 1e-4 || gap > 1e-9 {
                failures += 1;
                clipped_winners += usize::from(lambda_star(&co, grid_mu, c)?.contains(&0.0));
            }
        }
        Ok((
            failures == 0,
            format!(
                "{failures}/50 instances miss ({clipped_winners} beaten by a clipped spectrum); \
                 worst mu deviation {worst_mu:.2e}, worst alignment shortfall {worst_gap:.2e}"
            ),
        ))
    })
}

fn random_eigensystem(n: usize, rng: &mut impl Rng) -> Result<EigenSystem> {
    let m = DMatrix::from_fn(n, n, |_, _| normal(rng));
    let vectors = eig_sym(&(&m + m.transpose()))?.vectors;
    let mut values: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..2.0)).collect();
    values.sort_by(f64::total_cmp);
    EigenSystem::new(vectors, DVector::from_vec(values))
}

fn random_binary_labels(n: usize, rng: &mut impl Rng) -> Result<TrainingLabels> {
    let n_l = rng.random_range(2..=n);
    let mut indices: Vec<usize> = rand::seq::index::sample(rng, n, n_l).into_vec();
    indices.sort_unstable();
    let mut classes: Vec<usize> = (0..n_l).map(|_| rng.random_range(0..2)).collect();
    classes[0] = 0;
    classes[1] = 1;
    TrainingLabels::new(indices, classes, 2)
}

/// `fit_skl` at `mu_star` reproduces the parameter-free model for any C.
pub fn check_parameter_independence(seed: u64) -> Check {
    timed("parameter_independence", None, || {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (mut worst_f, mut worst_id) = (0.0f64, 0.0f64);
        let mut accepted = 0;
        while accepted < 50 {
            let n = rng.random_range(4..=30);
            let eig = Arc::new(random_eigensystem(n, &mut rng)?);
            let labels = random_binary_labels(n, &mut rng)?;
            let co = spectral_coefficients(&eig, &labels, DEFAULT_RIDGE)?;
            let Ok(bar) = lambda_bar(&co) else { continue };
            if bar.iter().any(|&l| l <= 1.0) || mu_star(&co, 1.0).is_err() {
                continue;
            }
            accepted += 1;
            let all: Vec<usize> = (0..n).collect();
            let free = fit_skl_kta(&eig, &labels, DEFAULT_RIDGE)?.predict(&all)?.decision;
            for c in [0.01, 1.0, 100.0] {
                let mu = mu_star(&co, c)?;
                let lam = lambda_star(&co, mu, c)?;
                for (lb, l) in bar.iter().zip(&lam) {
                    worst_id = worst_id.max((lb - (c * l + 1.0)).abs() / lb.max(1.0));
                }
                let fixed = fit_skl(&eig, &labels, c, mu, DEFAULT_RIDGE)?.predict(&all)?.decision;
                worst_f = worst_f.max((&fixed - &free).amax());
            }
        }
        Ok((
            worst_f <= 1e-8 && worst_id <= 1e-8,
            format!("worst decision difference {worst_f:.2e}, worst spectrum identity residual {worst_id:.2e}"),
        ))
    })
}

/// The labeled-subproblem bound and its equality case.
pub fn check_bound(seed: u64) -> Check {
    timed("labeled_subproblem_bound", None, || {
        let mut worst = f64::INFINITY;
        for (i, c) in [0.1, 1.0, 10.0].into_iter().enumerate() {
            worst = worst.min(check_upper_bound(20, 5, c, 1000, seed.wrapping_add(10_000 * i as u64))?);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut equality: f64 = 0.0;
        for _ in 0..100 {
            let m1 = DMatrix::from_fn(5, 5, |_, _| normal(&mut rng));
            let m2 = DMatrix::from_fn(15, 15, |_, _| normal(&mut rng));
            let mut k = DMatrix::zeros(20, 20);
            k.view_mut((0, 0), (5, 5)).copy_from(&(&m1 * m1.transpose()));
            k.view_mut((5, 5), (15, 15)).copy_from(&(&m2 * m2.transpose()));
            let y = DVector::from_fn(5, |_, _| if rng.random_bool(0.5) { 1.0 } else { -1.0 });
            equality = equality.max(upper_bound_slack(&k, &y, rng.random_range(0.1..10.0))?.abs());
        }
        Ok((
            worst >= -1e-10 && equality <= 1e-10,
            format!("min slack {worst:.2e} over 3000 trials, block-diagonal |slack| {equality:.2e}"),
        ))
    })
}

/// A connected random graph on `n ≥ 2` vertices: a random spanning tree plus
/// extra edges.
fn random_connected(vertices: &[usize], density: f64, rng: &mut impl Rng) -> Vec<(usize, usize, f64)> {
    let mut edges = Vec::new();
    for i in 1..vertices.len() {
        let j = rng.random_range(0..i);
        edges.push((vertices[i], vertices[j], rng.random_range(0.1..1.0)));
    }
    for i in 0..vertices.len() {
        for j in 0..i {
            if rng.random_bool(density) && !edges.iter().any(|&(a, b, _)| {
                (a, b) == (vertices[i], vertices[j]) || (b, a) == (vertices[i], vertices[j])
            }) {
                edges.push((vertices[i], vertices[j], rng.random_range(0.1..1.0)));
            }
        }
    }
    edges
}

/// The smoothness sum over edges equals twice the Laplacian quadratic form.
pub fn check_regularizer_identity(seed: u64) -> Check {
    timed("regularizer_identity", None, || {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut worst: f64 = 0.0;
        for _ in 0..100 {
            let n = rng.random_range(2..=40);
            let vertices: Vec<usize> = (0..n).collect();
            let graph = Graph::from_edges(n, random_connected(&vertices, 0.2, &mut rng))?;
            let v = DMatrix::from_fn(n, rng.random_range(1..=4), |_, _| normal(&mut rng));
            worst = worst.max(regularizer_identity(&v, &graph)?);
        }
        Ok((worst <= 1e-9, format!("worst residual {worst:.2e} over 100 graphs")))
    })
}

/// Orthonormality and reconstruction of the eigensolver, and zero
/// eigenvalues counting connected components.
pub fn check_eigen(seed: u64) -> Check {
    timed("eigensolver_contract", None, || {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (mut orth, mut recon) = (0.0f64, 0.0f64);
        for n in [1, 2, 3, 10, 50, 100, 200, 300] {
            let m = DMatrix::from_fn(n, n, |_, _| normal(&mut rng));
            let m = &m + m.transpose();
            let eig = eig_sym(&m)?;
            orth = orth.max((eig.vectors.transpose() * &eig.vectors - DMatrix::identity(n, n)).amax());
            recon = recon.max((eig.reconstruct() - &m).norm() / m.norm().max(f64::MIN_POSITIVE));
        }
        let mut mismatches = 0;
        for _ in 0..50 {
            let parts = rng.random_range(2..=5);
            let sizes: Vec<usize> = (0..parts).map(|_| rng.random_range(2..=10)).collect();
            let n: usize = sizes.iter().sum();
            let mut order: Vec<usize> = (0..n).collect();
            for i in (1..n).rev() {
                order.swap(i, rng.random_range(0..=i));
            }
            let mut edges = Vec::new();
            let mut start = 0;
            for &s in &sizes {
                edges.extend(random_connected(&order[start..start + s], 0.3, &mut rng));
                start += s;
            }
            let graph = Graph::from_edges(n, edges)?;
            let eig = eig_sym(&normalized_laplacian(&graph)?.matrix)?;
            let zeros = eig.values.iter().filter(|&&g| g.abs() < 1e-8).count();
            if zeros != parts || graph.connected_components() != parts {
                mismatches += 1;
            }
        }
        Ok((
            orth <= 1e-8 && recon <= 1e-7 && mismatches == 0,
            format!(
                "orthonormality {orth:.2e}, reconstruction {recon:.2e}, component mismatches {mismatches}/50"
            ),
        ))
    })
}

/// RLS dual optimum and gradient against finite differences.
pub fn check_rls_duality(seed: u64) -> Check {
    timed("rls_duality", None, || {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (mut gap, mut grad) = (0.0f64, 0.0f64);
        for _ in 0..100 {
            let n = rng.random_range(1..=15);
            let rank = rng.random_range(1..=n);
            let m = DMatrix::from_fn(n, rank, |_, _| normal(&mut rng));
            let k = &m * m.transpose();
            let y = DVector::from_fn(n, |_, _| normal(&mut rng));
            let c = 10f64.powf(rng.random_range(-2.0..2.0));
            let sol = rls_solve(&k, &y, c)?;
            let opt = rls_optimal_value(&k, &y, c)?;
            gap = gap.max((rls_dual_objective(&sol, &k, &y)? - opt).abs() / opt.abs().max(1.0));

            let alpha = DVector::from_fn(n, |_, _| normal(&mut rng));
            let analytic = rls_dual_gradient(&alpha, &k, &y, c)?;
            let h = 1e-6;
            for i in 0..n {
                let mut e = DVector::zeros(n);
                e[i] = h;
                let at = |a: DVector<f64>| {
                    rls_dual_objective(&RlsSolution { alpha: a, c, kernel_digest: String::new() }, &k, &y)
                };
                let fd = (at(&alpha + &e)? - at(&alpha - &e)?) / (2.0 * h);
                grad = grad.max((fd - analytic[i]).abs() / analytic[i].abs().max(1.0));
            }
        }
        Ok((
            gap <= 1e-9 && grad <= 1e-5,
            format!("worst duality gap {gap:.2e}, worst gradient error {grad:.2e}"),
        ))
    })
}

/// Well-separated isotropic blobs in the plane, `per_class` points each.
pub fn blobs(centers: &[(f64, f64)], per_class: usize, seed: u64) -> Result<Dataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = Vec::new();
    let mut labels = Vec::new();
    for (class, &(cx, cy)) in centers.iter().enumerate() {
        for _ in 0..per_class {
            values.push(cx + 0.5 * normal(&mut rng));
            values.push(cy + 0.5 * normal(&mut rng));
            labels.push(Some(class as i64));
        }
    }
    Dataset::from_raw(DMatrix::from_row_slice(labels.len(), 2, &values), labels)
}

/// Parameter-free accuracy with one labeled point per class.
fn one_shot_accuracy(data: &Dataset, k: usize) -> Result<f64> {
    let graph = similarity_graph(&data.features, k)?;
    let eig = laplacian_power(&eig_sym(&normalized_laplacian(&graph)?.matrix)?, 1)?;
    let mut indices = Vec::new();
    for class in 0..data.class_count() {
        indices.push(data.labels.iter().position(|&l| l == Some(class)).expect("class present"));
    }
    let labels = TrainingLabels::new(indices.clone(), (0..data.class_count()).collect(), data.class_count())?;
    let model = fit_skl_kta(&Arc::new(eig), &labels, DEFAULT_RIDGE)?;
    let query: Vec<usize> = (0..data.len()).filter(|i| !indices.contains(i)).collect();
    let predicted = model.predict(&query)?.classes;
    let correct = query.iter().zip(&predicted).filter(|(&q, &p)| data.labels[q] == Some(p)).count();
    Ok(correct as f64 / query.len() as f64)
}

/// Separable two- and three-class blobs are classified perfectly.
pub fn check_blobs(seed: u64) -> Check {
    timed("separable_blobs", None, || {
        let two = one_shot_accuracy(&blobs(&[(0.0, 0.0), (10.0, 0.0)], 30, seed)?, 5)?;
        let three = one_shot_accuracy(&blobs(&[(0.0, 0.0), (10.0, 0.0), (5.0, 9.0)], 30, seed)?, 5)?;
        Ok((
            two == 1.0 && three == 1.0,
            format!("two-class {:.1}%, three-class {:.1}%", 100.0 * two, 100.0 * three),
        ))
    })
}

/// All in-process checks in order.
pub fn run_all(seed: u64) -> Vec<Check> {
    vec![
        check_g50c(seed),
        check_lambda_star(seed),
        check_mu_star(seed),
        check_parameter_independence(seed),
        check_bound(seed),
        check_regularizer_identity(seed),
        check_eigen(seed),
        check_rls_duality(seed),
        check_blobs(seed),
    ]
}
