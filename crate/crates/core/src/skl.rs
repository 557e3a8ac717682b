//! Spectral kernel learning on a graph Laplacian eigensystem.
//!
//! Every closed form here is driven by two per-eigenvector quantities:
//! `a_i`, the squared norm of the labels projected on eigenvector `i`
//! (restricted to the labeled rows), and `b_i = γ_i + ε`, the ridged
//! Laplacian eigenvalue. With `r_i = sqrt(a_i / (2 b_i))`:
//!
//! * [`lambda_star`] minimizes `½ Σ a_i/(λ_i + 1/C) + μ Σ λ_i b_i` over
//!   `λ ≥ 0`, coordinate-wise: `λ_i = max(0, r_i/√μ - 1/C)`.
//! * [`mu_star`] picks the μ that maximizes kernel-target alignment of that
//!   spectrum.
//! * [`lambda_bar`] is the C- and μ-free spectrum obtained by substituting
//!   `mu_star` back, so that `K + I/C = K̄/C`.
//!
//! The learned kernel is `K = U diag(λ) Uᵀ`; only the columns at labeled
//! points are ever formed.

use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::eigen::{eig_sym, normalize_signs, EigenSystem};
use crate::error::{arg_err, Result, SklError};
use crate::linalg::solve_spd;

/// Default ridge added to Laplacian eigenvalues.
pub const DEFAULT_RIDGE: f64 = 1e-6;

/// Relative spread of ridged eigenvalues treated as one eigenspace.
pub const DEGENERACY_TOL: f64 = 1e-9;

/// Relative size below which a difference of moment products counts as zero.
const CANCELLATION_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelMode {
    /// Two classes encoded as a single ±1 column (class 1 is +1).
    Binary,
    /// One column per class, one-hot rows.
    OneHot,
}

/// Targets for the labeled points, `n_l × 1` (binary) or `n_l × c`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelMatrix {
    pub values: DMatrix<f64>,
    pub mode: LabelMode,
    pub class_count: usize,
}

impl LabelMatrix {
    pub fn from_classes(classes: &[usize], class_count: usize) -> Result<Self> {
        if class_count < 2 {
            return Err(arg_err!("need at least two classes, got {class_count}"));
        }
        if let Some(&c) = classes.iter().find(|&&c| c >= class_count) {
            return Err(arg_err!("class id {c} out of range for {class_count} classes"));
        }
        let n_l = classes.len();
        Ok(if class_count == 2 {
            let values = DMatrix::from_iterator(
                n_l,
                1,
                classes.iter().map(|&c| if c == 1 { 1.0 } else { -1.0 }),
            );
            Self { values, mode: LabelMode::Binary, class_count }
        } else {
            let mut values = DMatrix::zeros(n_l, class_count);
            for (i, &c) in classes.iter().enumerate() {
                values[(i, c)] = 1.0;
            }
            Self { values, mode: LabelMode::OneHot, class_count }
        })
    }

    pub fn len(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.nrows() == 0
    }

    /// `⟨Y Yᵀ, Y Yᵀ⟩_F`, computed as `‖Yᵀ Y‖_F²`.
    pub fn gram_norm_sq(&self) -> f64 {
        (self.values.transpose() * &self.values).norm_squared()
    }

    /// Class of one row of decision values. Binary: `≥ 0` is class 1.
    /// One-hot: first maximal column.
    pub fn decode(&self, row: &[f64]) -> usize {
        match self.mode {
            LabelMode::Binary => usize::from(row[0] >= 0.0),
            LabelMode::OneHot => {
                let mut best = 0;
                for (j, &v) in row.iter().enumerate() {
                    if v > row[best] {
                        best = j;
                    }
                }
                best
            }
        }
    }
}

/// Labeled point indices with their classes.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingLabels {
    pub indices: Vec<usize>,
    pub classes: Vec<usize>,
    pub matrix: LabelMatrix,
}

impl TrainingLabels {
    pub fn new(indices: Vec<usize>, classes: Vec<usize>, class_count: usize) -> Result<Self> {
        if indices.len() != classes.len() {
            return Err(arg_err!(
                "{} labeled indices but {} classes",
                indices.len(),
                classes.len()
            ));
        }
        if indices.is_empty() {
            return Err(arg_err!("no labeled points"));
        }
        let mut sorted = indices.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(arg_err!("labeled indices contain duplicates"));
        }
        let matrix = LabelMatrix::from_classes(&classes, class_count)?;
        Ok(Self { indices, classes, matrix })
    }

    /// The labeled prefix of a dataset.
    pub fn from_dataset(data: &Dataset) -> Result<Self> {
        let classes = data.labels[..data.n_labeled]
            .iter()
            .map(|c| c.expect("labeled prefix"))
            .collect();
        Self::new((0..data.n_labeled).collect(), classes, data.class_count())
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    fn check_against(&self, n: usize) -> Result<()> {
        if self.len() > n {
            return Err(arg_err!("{} labeled points exceed n = {n}", self.len()));
        }
        if let Some(&i) = self.indices.iter().find(|&&i| i >= n) {
            return Err(arg_err!("labeled index {i} out of range for n = {n}"));
        }
        Ok(())
    }
}

/// Per-eigenvector quantities that drive every closed form.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralCoefficients {
    /// `a_i = Σ_k (U_l[:, i]ᵀ Y[:, k])²`.
    pub a: Vec<f64>,
    /// `b_i = γ_i + ε`.
    pub b: Vec<f64>,
    pub n_labeled: usize,
    /// `⟨Y Yᵀ, Y Yᵀ⟩_F`; `n_l²` for ±1 labels.
    pub label_gram: f64,
}

impl SpectralCoefficients {
    pub fn len(&self) -> usize {
        self.a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.a.is_empty()
    }

    /// `r_i = sqrt(a_i / (2 b_i))`.
    pub fn ratios(&self) -> Vec<f64> {
        self.a
            .iter()
            .zip(&self.b)
            .map(|(a, b)| (a / (2.0 * b)).sqrt())
            .collect()
    }
}

pub fn spectral_coefficients(
    eig: &EigenSystem,
    labels: &TrainingLabels,
    eps: f64,
) -> Result<SpectralCoefficients> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(arg_err!("ridge must be positive, got {eps}"));
    }
    labels.check_against(eig.dim())?;
    let proj = eig.rows(&labels.indices).transpose() * &labels.matrix.values;
    let a = proj.row_iter().map(|r| r.norm_squared()).collect();
    let b = eig.values.iter().map(|g| g + eps).collect();
    Ok(SpectralCoefficients {
        a,
        b,
        n_labeled: labels.len(),
        label_gram: labels.matrix.gram_norm_sq(),
    })
}

/// Makes the diagonal spectral model basis-independent inside repeated
/// eigenspaces.
///
/// Eigenvectors whose ridged eigenvalues agree to [`DEGENERACY_TOL`] are
/// rotated so that the block of `U_lᵀ Y Yᵀ U_l` is diagonal. Returns `None`
/// when no block needed rotating.
pub fn align_degenerate_eigenspaces(
    eig: &EigenSystem,
    labels: &TrainingLabels,
    eps: f64,
) -> Result<Option<EigenSystem>> {
    labels.check_against(eig.dim())?;
    let n = eig.dim();
    let b: Vec<f64> = eig.values.iter().map(|g| g + eps).collect();
    let mut blocks = Vec::new();
    let mut start = 0;
    for i in 1..=n {
        if i == n || (b[i] - b[i - 1]).abs() > DEGENERACY_TOL * b[i].abs().max(b[i - 1].abs()) {
            if i - start > 1 {
                blocks.push(start..i);
            }
            start = i;
        }
    }
    if blocks.is_empty() {
        return Ok(None);
    }

    let mut vectors = eig.vectors.clone();
    for block in blocks {
        let m = block.len();
        let basis = eig.vectors.columns(block.start, m).into_owned();
        let proj = basis.select_rows(labels.indices.iter()).transpose() * &labels.matrix.values;
        let rotation = eig_sym(&(&proj * proj.transpose()))?.vectors;
        let mut rotated = basis * rotation;
        normalize_signs(&mut rotated);
        vectors.columns_mut(block.start, m).copy_from(&rotated);
    }
    Ok(Some(EigenSystem::new(vectors, eig.values.clone())?))
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(arg_err!("{name} must be positive and finite, got {v}"))
    }
}

/// Closed-form minimizer of the spectral objective for fixed μ and C.
pub fn lambda_star(co: &SpectralCoefficients, mu: f64, c: f64) -> Result<Vec<f64>> {
    check_positive("mu", mu)?;
    check_positive("C", c)?;
    Ok(co
        .a
        .iter()
        .zip(&co.b)
        .map(|(a, b)| ((a / (2.0 * mu * b)).sqrt() - 1.0 / c).max(0.0))
        .collect())
}

/// `F(λ) = ½ Σ a_i/(λ_i + 1/C) + μ Σ λ_i b_i`.
pub fn objective_f(co: &SpectralCoefficients, spectrum: &[f64], mu: f64, c: f64) -> Result<f64> {
    check_positive("mu", mu)?;
    check_positive("C", c)?;
    if spectrum.len() != co.len() {
        return Err(arg_err!("spectrum has {} entries, expected {}", spectrum.len(), co.len()));
    }
    if spectrum.iter().any(|&l| l < 0.0) {
        return Err(arg_err!("spectrum must be nonnegative"));
    }
    let fit: f64 = co.a.iter().zip(spectrum).map(|(a, l)| a / (l + 1.0 / c)).sum();
    let smooth: f64 = co.b.iter().zip(spectrum).map(|(b, l)| l * b).sum();
    Ok(0.5 * fit + mu * smooth)
}

/// Kernel-target alignment `Σ λ_i a_i / sqrt(Σ λ_i² · ⟨YYᵀ, YYᵀ⟩_F)`.
pub fn kta(co: &SpectralCoefficients, spectrum: &[f64]) -> Result<f64> {
    if spectrum.len() != co.len() {
        return Err(arg_err!("spectrum has {} entries, expected {}", spectrum.len(), co.len()));
    }
    let norm_sq: f64 = spectrum.iter().map(|l| l * l).sum();
    if norm_sq == 0.0 || co.label_gram <= 0.0 {
        return Err(SklError::Numerical("alignment undefined for a zero kernel".into()));
    }
    let inner: f64 = spectrum.iter().zip(&co.a).map(|(l, a)| l * a).sum();
    Ok(inner / (norm_sq * co.label_gram).sqrt())
}

/// Parameter-free sums over the eigenpairs.
struct Moments {
    /// `Σ a_i r_i`
    x: f64,
    /// `Σ r_i²`
    y: f64,
    /// `Σ r_i`
    z: f64,
    /// `Σ a_i`
    u: f64,
    n: f64,
}

impl Moments {
    fn new(co: &SpectralCoefficients) -> Result<Self> {
        if co.a.iter().all(|&a| a == 0.0) {
            return Err(SklError::Degenerate("labels have no projection on any eigenvector".into()));
        }
        let r = co.ratios();
        Ok(Self {
            x: co.a.iter().zip(&r).map(|(a, r)| a * r).sum(),
            y: r.iter().map(|r| r * r).sum(),
            z: r.iter().sum(),
            u: co.a.iter().sum(),
            n: co.len() as f64,
        })
    }

    /// `ȳû - ẑx̄`
    fn yu_minus_zx(&self) -> Result<f64> {
        let (p, q) = (self.y * self.u, self.z * self.x);
        let d = p - q;
        if d.abs() <= CANCELLATION_TOL * (p.abs() + q.abs()) {
            return Err(SklError::Degenerate(
                "alignment stationarity equation vanishes (ȳû = ẑx̄)".into(),
            ));
        }
        Ok(d)
    }

    /// `ẑû - n x̄`
    fn zu_minus_nx(&self) -> Result<f64> {
        let (p, q) = (self.z * self.u, self.n * self.x);
        let d = p - q;
        if d.abs() <= CANCELLATION_TOL * (p.abs() + q.abs()) {
            return Err(SklError::Degenerate(
                "alignment stationarity equation vanishes (ẑû = n x̄)".into(),
            ));
        }
        Ok(d)
    }
}

/// The μ > 0 at which the alignment of `lambda_star(co, μ, C)` is stationary,
/// assuming no coordinate is clipped.
///
/// Fails with a degenerate-instance error when the stationarity equation
/// vanishes or its root lies at negative `1/√μ` (no interior maximizer).
pub fn mu_star(co: &SpectralCoefficients, c: f64) -> Result<f64> {
    check_positive("C", c)?;
    let m = Moments::new(co)?;
    // with z̄ = ẑ/C, ū = û/C: ȳū - z̄x̄ = (ȳû - ẑx̄)/C and z̄ū - n x̄/C² = (ẑû - n x̄)/C²
    let num = m.yu_minus_zx()? / c;
    let den = m.zu_minus_nx()? / (c * c);
    if num.signum() != den.signum() {
        return Err(SklError::Degenerate(
            "alignment has no stationary point at positive mu".into(),
        ));
    }
    let mu = (num / den).powi(2);
    if !(mu > 0.0 && mu.is_finite()) {
        return Err(SklError::Degenerate(format!("optimal mu is not finite and positive ({mu})")));
    }
    Ok(mu)
}

/// Parameter-free spectrum `λ̄_i = |(ẑû - n x̄)/(ȳû - ẑx̄)| · r_i`.
pub fn lambda_bar(co: &SpectralCoefficients) -> Result<Vec<f64>> {
    let m = Moments::new(co)?;
    let den = m.yu_minus_zx()?;
    let num = m.z * m.u - m.n * m.x;
    let scale = (num / den).abs();
    Ok(co.ratios().into_iter().map(|r| scale * r).collect())
}

/// Fixed spectral transforms of the Laplacian eigenvalues.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SpectralTransform {
    /// `exp(-σ²/2 · γ)`
    Diffusion { sigma2: f64 },
    /// `1/(γ + ε)`
    GaussianField { eps: f64 },
}

pub fn parametric_transform(eig: &EigenSystem, kind: SpectralTransform) -> Result<Vec<f64>> {
    match kind {
        SpectralTransform::Diffusion { sigma2 } => {
            check_positive("sigma2", sigma2)?;
            Ok(eig.values.iter().map(|g| (-0.5 * sigma2 * g).exp()).collect())
        }
        SpectralTransform::GaussianField { eps } => {
            check_positive("eps", eps)?;
            Ok(eig.values.iter().map(|g| 1.0 / (g.max(0.0) + eps)).collect())
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelMode {
    /// Readout `(K̄ - I)_{q,l} K̄_{l,l}⁻¹ Y`.
    ParameterFree,
    /// Readout `K_{q,l} (K_{l,l} + I/C)⁻¹ Y`.
    Parametric {
        #[serde(rename = "C")]
        c: f64,
        mu: f64,
    },
    /// Readout `K_{q,l} K_{l,l}⁻¹ Y`, used for fixed transforms.
    Interpolating,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    SklKta,
    Skl,
    Diffusion,
    GaussianField,
}

/// A fitted transductive classifier over the `n` points of one eigensystem.
#[derive(Debug, Clone)]
pub struct SklModel {
    pub eig: Arc<EigenSystem>,
    pub spectrum: Vec<f64>,
    pub mode: ModelMode,
    pub kind: ModelKind,
    pub labels: TrainingLabels,
    pub eps: f64,
    /// Readout coefficients, `n_l × columns(Y)`.
    weights: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    /// `|query| × columns(Y)` decision values.
    pub decision: DMatrix<f64>,
    pub classes: Vec<usize>,
}

/// Kernel rows `U_rows diag(s) U_colsᵀ`.
fn kernel_block(eig: &EigenSystem, spectrum: &[f64], rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    let mut left = eig.rows(rows);
    for (mut col, &s) in left.column_iter_mut().zip(spectrum) {
        col *= s;
    }
    left * eig.rows(cols).transpose()
}

fn aligned(eig: &Arc<EigenSystem>, labels: &TrainingLabels, eps: f64) -> Result<Arc<EigenSystem>> {
    Ok(match align_degenerate_eigenspaces(eig, labels, eps)? {
        Some(rotated) => Arc::new(rotated),
        None => Arc::clone(eig),
    })
}

impl SklModel {
    /// Assembles a model and solves for its readout weights.
    pub fn from_parts(
        eig: Arc<EigenSystem>,
        spectrum: Vec<f64>,
        mode: ModelMode,
        kind: ModelKind,
        labels: TrainingLabels,
        eps: f64,
    ) -> Result<Self> {
        labels.check_against(eig.dim())?;
        if spectrum.len() != eig.dim() {
            return Err(arg_err!("spectrum has {} entries, expected {}", spectrum.len(), eig.dim()));
        }
        if spectrum.iter().any(|&s| !(s >= 0.0 && s.is_finite())) {
            return Err(SklError::Numerical("learned spectrum is negative or non-finite".into()));
        }
        let mut kll = kernel_block(&eig, &spectrum, &labels.indices, &labels.indices);
        if let ModelMode::Parametric { c, .. } = mode {
            for i in 0..kll.nrows() {
                kll[(i, i)] += 1.0 / c;
            }
        }
        let weights = solve_spd(&kll, &labels.matrix.values, "labeled kernel block")?;
        Ok(Self { eig, spectrum, mode, kind, labels, eps, weights })
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }

    /// Decision values and classes for the given point indices.
    pub fn predict(&self, query: &[usize]) -> Result<Prediction> {
        let n = self.eig.dim();
        if let Some(&q) = query.iter().find(|&&q| q >= n) {
            return Err(arg_err!("query index {q} out of range for n = {n}"));
        }
        let cols = self.weights.ncols();
        if query.is_empty() {
            return Ok(Prediction { decision: DMatrix::zeros(0, cols), classes: Vec::new() });
        }
        let kql = kernel_block(&self.eig, &self.spectrum, query, &self.labels.indices);
        let mut decision = kql * &self.weights;
        if self.mode == ModelMode::ParameterFree {
            // subtract I_{q,l} K̄_{l,l}⁻¹ Y for queried labeled points
            for (row, &q) in query.iter().enumerate() {
                if let Some(p) = self.labels.indices.iter().position(|&l| l == q) {
                    for k in 0..cols {
                        decision[(row, k)] -= self.weights[(p, k)];
                    }
                }
            }
        }
        let classes = decision
            .row_iter()
            .map(|r| self.labels.matrix.decode(&r.iter().copied().collect::<Vec<_>>()))
            .collect();
        Ok(Prediction { decision, classes })
    }
}

/// Parameter-free fit: spectrum `λ̄`, no trade-off or smoothness parameter.
pub fn fit_skl_kta(eig: &Arc<EigenSystem>, labels: &TrainingLabels, eps: f64) -> Result<SklModel> {
    let eig = aligned(eig, labels, eps)?;
    let co = spectral_coefficients(&eig, labels, eps)?;
    let spectrum = lambda_bar(&co)?;
    SklModel::from_parts(eig, spectrum, ModelMode::ParameterFree, ModelKind::SklKta, labels.clone(), eps)
}

/// Fit with given `C` and `μ`: spectrum `λ*`, RLS readout.
pub fn fit_skl(
    eig: &Arc<EigenSystem>,
    labels: &TrainingLabels,
    c: f64,
    mu: f64,
    eps: f64,
) -> Result<SklModel> {
    let eig = aligned(eig, labels, eps)?;
    let co = spectral_coefficients(&eig, labels, eps)?;
    let spectrum = lambda_star(&co, mu, c)?;
    SklModel::from_parts(eig, spectrum, ModelMode::Parametric { c, mu }, ModelKind::Skl, labels.clone(), eps)
}

/// Fit with a fixed spectral transform and an interpolating readout.
pub fn fit_transform(
    eig: &Arc<EigenSystem>,
    labels: &TrainingLabels,
    transform: SpectralTransform,
) -> Result<SklModel> {
    let spectrum = parametric_transform(eig, transform)?;
    let (kind, eps) = match transform {
        SpectralTransform::Diffusion { .. } => (ModelKind::Diffusion, 0.0),
        SpectralTransform::GaussianField { eps } => (ModelKind::GaussianField, eps),
    };
    SklModel::from_parts(Arc::clone(eig), spectrum, ModelMode::Interpolating, kind, labels.clone(), eps)
}

/// Spectral coefficients paired with `γ` for reporting.
pub fn spectrum_table(model: &SklModel) -> Result<Vec<(f64, f64, f64)>> {
    // a_i does not depend on the ridge; transforms store eps = 0
    let eps = if model.eps > 0.0 { model.eps } else { DEFAULT_RIDGE };
    let co = spectral_coefficients(&model.eig, &model.labels, eps)?;
    Ok(model
        .eig
        .values
        .iter()
        .zip(&co.a)
        .zip(&model.spectrum)
        .map(|((&g, &a), &s)| (g, a, s))
        .collect())
}
