//! Saving and loading fitted models.
//!
//! A model is a JSON document plus a sidecar `<file>.u.bin` holding the
//! eigenvectors as row-major little-endian `f64`.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::eigen::EigenSystem;
use crate::error::{Result, SklError};
use crate::skl::{ModelKind, ModelMode, SklModel, TrainingLabels};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelDocument {
    pub n: usize,
    pub n_l: usize,
    pub c: usize,
    pub kind: ModelKind,
    pub mode: ModelMode,
    pub eps: f64,
    pub spectrum: Vec<f64>,
    pub gamma: Vec<f64>,
    pub labeled: Vec<usize>,
    pub classes: Vec<usize>,
    /// Raw label of each class id.
    pub class_labels: Vec<i64>,
    /// Original row number of each point.
    pub rows: Vec<usize>,
    pub dataset_digest: String,
    /// Sidecar file name, relative to the document.
    pub vectors_file: String,
}

fn sidecar_path(path: &Path) -> Result<(PathBuf, String)> {
    let name = path
        .file_name()
        .ok_or_else(|| SklError::Argument(format!("{} is not a file path", path.display())))?
        .to_string_lossy()
        .into_owned();
    let side = format!("{name}.u.bin");
    Ok((path.with_file_name(&side), side))
}

/// A loaded model with the dataset bookkeeping needed to report results.
#[derive(Debug, Clone)]
pub struct SavedModel {
    pub model: SklModel,
    pub class_labels: Vec<i64>,
    pub rows: Vec<usize>,
    pub dataset_digest: String,
}

impl SavedModel {
    /// `(original row, predicted raw label)` for every point without a
    /// training label, sorted by row.
    pub fn predict_unlabeled(&self) -> Result<Vec<(usize, i64)>> {
        let n = self.model.eig.dim();
        let query: Vec<usize> = (0..n).filter(|i| !self.model.labels.indices.contains(i)).collect();
        let classes = self.model.predict(&query)?.classes;
        let mut out: Vec<(usize, i64)> = query
            .iter()
            .zip(classes)
            .map(|(&q, c)| (self.rows[q], self.class_labels[c]))
            .collect();
        out.sort_unstable();
        Ok(out)
    }
}

/// Writes `model`, fitted on `data`, to `path` and its sidecar.
pub fn save_model(model: &SklModel, data: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if data.len() != model.eig.dim() {
        return Err(SklError::Argument(format!(
            "model has {} points, dataset has {}",
            model.eig.dim(),
            data.len()
        )));
    }
    let (side_path, side_name) = sidecar_path(path)?;
    let n = model.eig.dim();
    let doc = ModelDocument {
        n,
        n_l: model.labels.len(),
        c: model.labels.matrix.class_count,
        kind: model.kind,
        mode: model.mode,
        eps: model.eps,
        spectrum: model.spectrum.clone(),
        gamma: model.eig.values.iter().copied().collect(),
        labeled: model.labels.indices.clone(),
        classes: model.labels.classes.clone(),
        class_labels: data.classes.clone(),
        rows: data.permutation.clone(),
        dataset_digest: data.digest(),
        vectors_file: side_name,
    };
    let mut bytes = Vec::with_capacity(n * n * 8);
    for row in model.eig.vectors.row_iter() {
        for v in row.iter() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    fs::write(&side_path, bytes)?;
    fs::write(path, serde_json::to_string_pretty(&doc)?)?;
    Ok(())
}

/// Loads a saved model. The readout weights are recomputed from the stored
/// parts.
pub fn load_model(path: impl AsRef<Path>) -> Result<SavedModel> {
    let path = path.as_ref();
    let doc: ModelDocument = serde_json::from_str(&fs::read_to_string(path)?)?;
    let side = path.with_file_name(&doc.vectors_file);
    let bytes = fs::read(&side)?;
    let n = doc.n;
    if bytes.len() != n * n * 8 {
        return Err(SklError::Validation(format!(
            "{} holds {} bytes, expected {}",
            side.display(),
            bytes.len(),
            n * n * 8
        )));
    }
    if doc.gamma.len() != n
        || doc.spectrum.len() != n
        || doc.rows.len() != n
        || doc.labeled.len() != doc.n_l
        || doc.class_labels.len() != doc.c
    {
        return Err(SklError::Validation("model document has inconsistent sizes".into()));
    }
    let values: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    let eig = EigenSystem::new(DMatrix::from_row_slice(n, n, &values), DVector::from_vec(doc.gamma))?;
    let labels = TrainingLabels::new(doc.labeled, doc.classes, doc.c)?;
    let model = SklModel::from_parts(Arc::new(eig), doc.spectrum, doc.mode, doc.kind, labels, doc.eps)?;
    Ok(SavedModel { model, class_labels: doc.class_labels, rows: doc.rows, dataset_digest: doc.dataset_digest })
}
