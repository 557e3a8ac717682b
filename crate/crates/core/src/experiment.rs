//! Transductive evaluation harness.
//!
//! The graph and its eigensystem depend only on the features, so they are
//! built once per dataset and shared by every labeled/unlabeled split.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::dataset::{load_dataset, DataFormat, Dataset};
use crate::eigen::{eig_sym, EigenSystem};
use crate::error::{arg_err, Result, SklError};
use crate::graph::{laplacian_power, normalized_laplacian, similarity_graph};
use crate::rls::{gaussian_kernel, mean_norm_bandwidth, rls_predict, rls_solve};
use crate::skl::{
    fit_skl, fit_skl_kta, fit_transform, spectrum_table, LabelMatrix, SklModel, SpectralTransform,
    TrainingLabels, DEFAULT_RIDGE,
};

pub const G50C_POINTS: usize = 550;
pub const G50C_DIM: usize = 50;
pub const G50C_BAYES_ERROR: f64 = 0.05;

/// Distance between two unit-covariance Gaussian means giving the requested
/// Bayes error under equal priors: `2 Φ⁻¹(1 - err)`.
pub fn bayes_separation(bayes_error: f64) -> f64 {
    2.0 * Normal::standard().inverse_cdf(1.0 - bayes_error)
}

/// Two unit-covariance Gaussians in `dim` dimensions with equal priors and
/// means `±(separation/2) e_1`. Class 1 is the positive mean.
pub fn gaussian_mixture(points: usize, dim: usize, separation: f64, seed: u64) -> Result<Dataset> {
    if dim == 0 {
        return Err(arg_err!("dimension must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = Vec::with_capacity(points * dim);
    let mut labels = Vec::with_capacity(points);
    for _ in 0..points {
        let class = rng.random_bool(0.5);
        let offset = if class { 0.5 * separation } else { -0.5 * separation };
        for j in 0..dim {
            let z: f64 = rng.sample(StandardNormal);
            values.push(if j == 0 { z + offset } else { z });
        }
        labels.push(Some(i64::from(class)));
    }
    Dataset::from_raw(DMatrix::from_row_slice(points, dim, &values), labels)
}

/// The 550-point, 50-dimensional two-Gaussian benchmark with 5% Bayes error.
pub fn gen_g50c(seed: u64) -> Result<Dataset> {
    gaussian_mixture(G50C_POINTS, G50C_DIM, bayes_separation(G50C_BAYES_ERROR), seed)
}

/// Labeled point indices for one split, ascending.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub labeled: Vec<usize>,
}

const MAX_SPLIT_ATTEMPTS: usize = 100_000;

/// Draws `splits` labeled subsets of size `n_l` among the points with known
/// labels, each containing every class at least once.
pub fn make_splits(data: &Dataset, n_l: usize, splits: usize, seed: u64) -> Result<Vec<Split>> {
    let c = data.class_count();
    let pool: Vec<usize> = (0..data.len()).filter(|&i| data.labels[i].is_some()).collect();
    if n_l < c {
        return Err(arg_err!("n_l = {n_l} cannot cover {c} classes"));
    }
    if n_l > pool.len() {
        return Err(arg_err!("n_l = {n_l} exceeds the {} labeled points", pool.len()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(splits);
    for s in 0..splits {
        let mut found = None;
        for _ in 0..MAX_SPLIT_ATTEMPTS {
            let mut labeled: Vec<usize> = index::sample(&mut rng, pool.len(), n_l)
                .into_iter()
                .map(|i| pool[i])
                .collect();
            let mut seen = vec![false; c];
            for &i in &labeled {
                seen[data.labels[i].unwrap()] = true;
            }
            if seen.iter().all(|&b| b) {
                labeled.sort_unstable();
                found = Some(labeled);
                break;
            }
        }
        let labeled = found.ok_or_else(|| {
            arg_err!("split {s}: could not draw {n_l} points covering all {c} classes")
        })?;
        out.push(Split { labeled });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Generator {
    G50c,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DatasetSource {
    File { path: PathBuf, format: DataFormat },
    Generated { generator: Generator, seed: u64 },
}

impl DatasetSource {
    pub fn load(&self) -> Result<Dataset> {
        match self {
            DatasetSource::File { path, format } => load_dataset(path, *format),
            DatasetSource::Generated { generator: Generator::G50c, seed } => gen_g50c(*seed),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Algorithm {
    SklKta,
    Skl {
        #[serde(rename = "C")]
        c: f64,
        mu: f64,
    },
    RlsBaseline {
        #[serde(rename = "C")]
        c: f64,
    },
    Diffusion {
        sigma2: f64,
    },
    GaussianField {
        eps_k: f64,
    },
}

impl Algorithm {
    fn uses_graph(&self) -> bool {
        !matches!(self, Algorithm::RlsBaseline { .. })
    }
}

fn default_power() -> u32 {
    1
}

fn default_ridge() -> f64 {
    DEFAULT_RIDGE
}

fn default_splits() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetSource,
    pub k: usize,
    #[serde(default = "default_power")]
    pub p: u32,
    #[serde(default = "default_ridge")]
    pub eps: f64,
    pub algorithm: Algorithm,
    #[serde(default = "default_splits")]
    pub splits: usize,
    /// Labeled points per split; absent means "use the dataset's own labels".
    #[serde(default)]
    pub n_l: Option<usize>,
    #[serde(default)]
    pub seed: u64,
}

impl ExperimentConfig {
    /// Reads a JSON config; a relative dataset path is resolved against the
    /// config file's directory.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| arg_err!("cannot read {}: {e}", path.display()))?;
        let mut cfg: ExperimentConfig = serde_json::from_str(&text)?;
        if let DatasetSource::File { path: data, .. } = &mut cfg.dataset {
            if data.is_relative() {
                if let Some(dir) = path.parent() {
                    *data = dir.join(&*data);
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(arg_err!("k must be at least 1"));
        }
        if self.p == 0 {
            return Err(arg_err!("p must be at least 1"));
        }
        if self.splits == 0 {
            return Err(arg_err!("splits must be at least 1"));
        }
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(arg_err!("eps must be positive"));
        }
        Ok(())
    }
}

/// Everything label-independent: the dataset and, for graph-based
/// algorithms, the powered Laplacian eigensystem.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub dataset: Dataset,
    pub eig: Option<Arc<EigenSystem>>,
    pub graph_seconds: f64,
    pub eig_seconds: f64,
}

pub fn prepare(config: &ExperimentConfig, dataset: Dataset) -> Result<Prepared> {
    config.validate()?;
    if !config.algorithm.uses_graph() {
        return Ok(Prepared { dataset, eig: None, graph_seconds: 0.0, eig_seconds: 0.0 });
    }
    let t = Instant::now();
    let graph = similarity_graph(&dataset.features, config.k)?;
    let lap = normalized_laplacian(&graph)?;
    let graph_seconds = t.elapsed().as_secs_f64();
    let t = Instant::now();
    let eig = laplacian_power(&eig_sym(&lap.matrix)?, config.p)?;
    let eig_seconds = t.elapsed().as_secs_f64();
    Ok(Prepared { dataset, eig: Some(Arc::new(eig)), graph_seconds, eig_seconds })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitReport {
    pub index: usize,
    /// Labeled points, as original row numbers.
    pub labeled: Vec<usize>,
    /// Unlabeled points with a known label.
    pub scored: usize,
    pub correct: usize,
    /// `correct / scored`, absent when nothing could be scored.
    pub accuracy: Option<f64>,
    /// Predicted raw label per original row; absent for the split's
    /// labeled points.
    pub predicted: Vec<Option<i64>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub load: f64,
    pub graph: f64,
    pub eig: f64,
    pub fit: f64,
    pub predict: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub config: ExperimentConfig,
    pub dataset_digest: String,
    pub n: usize,
    pub d: usize,
    pub classes: Vec<i64>,
    pub splits: Vec<SplitReport>,
    pub mean_accuracy: Option<f64>,
    pub std_accuracy: Option<f64>,
    /// Wall-clock seconds per phase; fit and predict are summed over splits.
    pub timings: Timings,
}

/// Mean and sample standard deviation (0 for a single value).
pub fn mean_std(values: &[f64]) -> Option<(f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = if values.len() < 2 {
        0.0
    } else {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    };
    Some((mean, std))
}

/// The splits a config asks for.
pub fn config_splits(config: &ExperimentConfig, data: &Dataset) -> Result<Vec<Split>> {
    match config.n_l {
        Some(n_l) => make_splits(data, n_l, config.splits, config.seed),
        None => Ok(vec![Split { labeled: (0..data.n_labeled).collect() }]),
    }
}

fn training_labels(data: &Dataset, split: &Split) -> Result<TrainingLabels> {
    let classes = split
        .labeled
        .iter()
        .map(|&i| data.labels[i].ok_or_else(|| arg_err!("point {i} has no label")))
        .collect::<Result<Vec<_>>>()?;
    TrainingLabels::new(split.labeled.clone(), classes, data.class_count())
}

/// Fits the configured spectral model on one split.
pub fn fit_split(config: &ExperimentConfig, prepared: &Prepared, split: &Split) -> Result<SklModel> {
    let labels = training_labels(&prepared.dataset, split)?;
    let eig = prepared
        .eig
        .as_ref()
        .ok_or_else(|| arg_err!("algorithm does not use a spectral model"))?;
    match config.algorithm {
        Algorithm::SklKta => fit_skl_kta(eig, &labels, config.eps),
        Algorithm::Skl { c, mu } => fit_skl(eig, &labels, c, mu, config.eps),
        Algorithm::Diffusion { sigma2 } => fit_transform(eig, &labels, SpectralTransform::Diffusion { sigma2 }),
        Algorithm::GaussianField { eps_k } => {
            fit_transform(eig, &labels, SpectralTransform::GaussianField { eps: eps_k })
        }
        Algorithm::RlsBaseline { .. } => Err(arg_err!("RLS baseline has no spectral model")),
    }
}

/// Classes predicted for `query` by the supervised Gaussian-kernel RLS
/// baseline.
fn rls_baseline(data: &Dataset, labels: &TrainingLabels, query: &[usize], c: f64) -> Result<Vec<usize>> {
    let sigma = mean_norm_bandwidth(&data.features);
    let k_ll = gaussian_kernel(&data.features, &labels.indices, &labels.indices, sigma)?;
    let k_ql = gaussian_kernel(&data.features, query, &labels.indices, sigma)?;
    let y: &LabelMatrix = &labels.matrix;
    let mut decision = DMatrix::zeros(query.len(), y.values.ncols());
    for (j, col) in y.values.column_iter().enumerate() {
        let sol = rls_solve(&k_ll, &DVector::from(col.into_owned()), c)?;
        decision.set_column(j, &rls_predict(&k_ql, &sol)?);
    }
    Ok(decision
        .row_iter()
        .map(|r| y.decode(&r.iter().copied().collect::<Vec<_>>()))
        .collect())
}

struct SplitOutcome {
    report: SplitReport,
    fit_seconds: f64,
    predict_seconds: f64,
}

/// Fits, predicts the unlabeled block, and scores one split.
pub fn evaluate_split(
    config: &ExperimentConfig,
    prepared: &Prepared,
    index: usize,
    split: &Split,
) -> Result<SplitReport> {
    evaluate(config, prepared, index, split).map(|o| o.report)
}

fn evaluate(config: &ExperimentConfig, prepared: &Prepared, index: usize, split: &Split) -> Result<SplitOutcome> {
    let data = &prepared.dataset;
    let n = data.len();
    let mut is_labeled = vec![false; n];
    for &i in &split.labeled {
        is_labeled[i] = true;
    }
    let query: Vec<usize> = (0..n).filter(|&i| !is_labeled[i]).collect();

    let t = Instant::now();
    let (predicted, fit_seconds, predict_seconds) = match config.algorithm {
        Algorithm::RlsBaseline { c } => {
            let labels = training_labels(data, split)?;
            let classes = rls_baseline(data, &labels, &query, c)?;
            (classes, t.elapsed().as_secs_f64(), 0.0)
        }
        _ => {
            let model = fit_split(config, prepared, split)?;
            let fit_seconds = t.elapsed().as_secs_f64();
            let t = Instant::now();
            let classes = model.predict(&query)?.classes;
            (classes, fit_seconds, t.elapsed().as_secs_f64())
        }
    };

    let mut scored = 0;
    let mut correct = 0;
    let mut by_original = vec![None; n];
    for (&q, &class) in query.iter().zip(&predicted) {
        by_original[data.permutation[q]] = Some(data.classes[class]);
        if let Some(truth) = data.labels[q] {
            scored += 1;
            correct += usize::from(truth == class);
        }
    }
    let mut labeled: Vec<usize> = split.labeled.iter().map(|&i| data.permutation[i]).collect();
    labeled.sort_unstable();
    let report = SplitReport {
        index,
        labeled,
        scored,
        correct,
        accuracy: (scored > 0).then(|| correct as f64 / scored as f64),
        predicted: by_original,
    };
    Ok(SplitOutcome { report, fit_seconds, predict_seconds })
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<Report> {
    let start = Instant::now();
    config.validate()?;
    let dataset = config.dataset.load()?;
    let load = start.elapsed().as_secs_f64();
    let prepared = prepare(config, dataset)?;
    let data = &prepared.dataset;
    let splits = config_splits(config, data)?;

    let outcomes: Vec<Result<SplitOutcome>> = splits
        .par_iter()
        .enumerate()
        .map(|(i, s)| evaluate(config, &prepared, i, s).map_err(|e| e.in_split(i)))
        .collect();

    let mut timings = Timings {
        load,
        graph: prepared.graph_seconds,
        eig: prepared.eig_seconds,
        ..Timings::default()
    };
    let mut reports = Vec::with_capacity(outcomes.len());
    for outcome in outcomes {
        let o = outcome?;
        timings.fit += o.fit_seconds;
        timings.predict += o.predict_seconds;
        reports.push(o.report);
    }
    let accuracies: Vec<f64> = reports.iter().filter_map(|r| r.accuracy).collect();
    let stats = mean_std(&accuracies);
    timings.total = start.elapsed().as_secs_f64();

    Ok(Report {
        config: config.clone(),
        dataset_digest: data.digest(),
        n: data.len(),
        d: data.dim(),
        classes: data.classes.clone(),
        splits: reports,
        mean_accuracy: stats.map(|s| s.0),
        std_accuracy: stats.map(|s| s.1),
        timings,
    })
}

/// CSV of `(index, gamma, a, lambda_bar)` rows from the parameter-free model
/// fitted on the config's first split, ascending in `gamma`.
pub fn dump_spectrum(config: &ExperimentConfig) -> Result<String> {
    let kta_config = ExperimentConfig { algorithm: Algorithm::SklKta, ..config.clone() };
    let prepared = prepare(&kta_config, config.dataset.load()?)?;
    let split = config_splits(&kta_config, &prepared.dataset)?
        .into_iter()
        .next()
        .ok_or_else(|| SklError::Argument("no split to fit".into()))?;
    let model = fit_split(&kta_config, &prepared, &split)?;
    let mut out = String::from("index,gamma,a,lambda_bar\n");
    for (i, (g, a, l)) in spectrum_table(&model)?.into_iter().enumerate() {
        out.push_str(&format!("{i},{g:e},{a:e},{l:e}\n"));
    }
    Ok(out)
}
