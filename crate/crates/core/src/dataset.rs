//! Point sets with partial labels.
//!
//! Two on-disk formats are read. `dense-csv` has one point per row, decimal
//! feature columns and a final label column holding an integer or `?`.
//! `sparse-text` follows the svmlight layout `<label> <index>:<value> ...`
//! with 1-based feature indices and `?` as the unlabeled marker.
//!
//! Labeled rows are moved to the front on load; `permutation[new] = original`
//! records where each row came from.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Result, SklError};

pub const UNLABELED: &str = "?";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DataFormat {
    #[serde(rename = "dense-csv")]
    DenseCsv,
    #[serde(rename = "sparse-text")]
    SparseText,
}

impl std::str::FromStr for DataFormat {
    type Err = SklError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dense-csv" => Ok(DataFormat::DenseCsv),
            "sparse-text" => Ok(DataFormat::SparseText),
            other => Err(SklError::Argument(format!("unknown data format {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    /// n × d feature matrix, labeled rows first.
    pub features: DMatrix<f64>,
    /// Class id in `0..classes.len()` or `None` for unlabeled points.
    pub labels: Vec<Option<usize>>,
    /// Raw label value of each class id, ascending.
    pub classes: Vec<i64>,
    /// Number of labeled points; they occupy rows `0..n_labeled`.
    pub n_labeled: usize,
    pub permutation: Vec<usize>,
}

impl Dataset {
    /// Builds a dataset from raw labels, reordering so labeled rows come first.
    pub fn from_raw(features: DMatrix<f64>, raw_labels: Vec<Option<i64>>) -> Result<Self> {
        let n = features.nrows();
        if raw_labels.len() != n {
            return Err(SklError::Argument(format!(
                "{} labels for {n} feature rows",
                raw_labels.len()
            )));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(SklError::Validation("features contain non-finite values".into()));
        }
        let classes: Vec<i64> = raw_labels
            .iter()
            .flatten()
            .copied()
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        if classes.is_empty() {
            return Err(SklError::Validation("dataset has no labeled points".into()));
        }

        let (mut labeled, unlabeled): (Vec<usize>, Vec<usize>) =
            (0..n).partition(|&i| raw_labels[i].is_some());
        let n_labeled = labeled.len();
        labeled.extend(unlabeled);
        let permutation = labeled;

        let features = features.select_rows(permutation.iter());
        let labels = permutation
            .iter()
            .map(|&i| raw_labels[i].map(|raw| classes.binary_search(&raw).unwrap()))
            .collect();
        Ok(Self {
            features,
            labels,
            classes,
            n_labeled,
            permutation,
        })
    }

    pub fn len(&self) -> usize {
        self.features.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn class_count(&self) -> usize {
        self.classes.len()
    }

    /// SHA-256 over shape, features (little-endian f64) and raw labels.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.len() as u64).to_le_bytes());
        h.update((self.dim() as u64).to_le_bytes());
        for i in 0..self.len() {
            for j in 0..self.dim() {
                h.update(self.features[(i, j)].to_le_bytes());
            }
            match self.labels[i] {
                Some(c) => h.update(self.classes[c].to_le_bytes()),
                None => h.update(b"?"),
            }
        }
        hex::encode(h.finalize())
    }

    /// Writes the dataset as dense CSV in its original row order.
    pub fn write_csv(&self, mut out: impl std::io::Write) -> Result<()> {
        let mut rows = vec![0usize; self.len()];
        for (new, &orig) in self.permutation.iter().enumerate() {
            rows[orig] = new;
        }
        for &r in &rows {
            let mut line = String::new();
            for j in 0..self.dim() {
                line.push_str(&format!("{:?},", self.features[(r, j)]));
            }
            match self.labels[r] {
                Some(c) => line.push_str(&self.classes[c].to_string()),
                None => line.push_str(UNLABELED),
            }
            writeln!(out, "{line}")?;
        }
        Ok(())
    }
}

pub fn load_dataset(path: impl AsRef<Path>, format: DataFormat) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path)
        .map_err(|e| SklError::Argument(format!("cannot open {}: {e}", path.display())))?;
    match format {
        DataFormat::DenseCsv => parse_dense_csv(BufReader::new(file)),
        DataFormat::SparseText => parse_sparse_text(BufReader::new(file)),
    }
}

fn parse_label(token: &str, line: usize) -> Result<Option<i64>> {
    let token = token.trim();
    if token == UNLABELED {
        return Ok(None);
    }
    token.parse::<i64>().map(Some).map_err(|_| SklError::Parse {
        line,
        message: format!("bad label {token:?}"),
    })
}

pub fn parse_dense_csv(reader: impl std::io::Read) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .flexible(true)
        .from_reader(reader);

    let mut values = Vec::new();
    let mut labels = Vec::new();
    let mut width: Option<usize> = None;
    for record in rdr.records() {
        let record = record.map_err(|e| SklError::Parse {
            line: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.len() < 2 {
            return Err(SklError::Parse {
                line,
                message: "need at least one feature and a label".into(),
            });
        }
        let d = record.len() - 1;
        match width {
            None => width = Some(d),
            Some(w) if w != d => {
                return Err(SklError::Parse {
                    line,
                    message: format!("expected {w} features, found {d}"),
                })
            }
            _ => {}
        }
        for field in record.iter().take(d) {
            let v: f64 = field.parse().map_err(|_| SklError::Parse {
                line,
                message: format!("bad feature value {field:?}"),
            })?;
            values.push(v);
        }
        labels.push(parse_label(&record[d], line)?);
    }
    let d = width.unwrap_or(0);
    let features = DMatrix::from_row_slice(labels.len(), d, &values);
    Dataset::from_raw(features, labels)
}

pub fn parse_sparse_text(reader: impl BufRead) -> Result<Dataset> {
    let mut rows: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut labels = Vec::new();
    let mut d = 0usize;
    for (lineno, line) in reader.lines().enumerate() {
        let lineno = lineno + 1;
        let line = line?;
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut tokens = line.split_whitespace();
        let label = parse_label(tokens.next().unwrap(), lineno)?;
        let mut row = Vec::new();
        for tok in tokens {
            let bad = || SklError::Parse {
                line: lineno,
                message: format!("bad feature {tok:?}"),
            };
            let (idx, val) = tok.split_once(':').ok_or_else(bad)?;
            let idx: usize = idx.parse().map_err(|_| bad())?;
            let val: f64 = val.parse().map_err(|_| bad())?;
            if idx == 0 {
                return Err(SklError::Parse {
                    line: lineno,
                    message: "feature indices are 1-based".into(),
                });
            }
            d = d.max(idx);
            row.push((idx - 1, val));
        }
        rows.push(row);
        labels.push(label);
    }
    let mut features = DMatrix::zeros(rows.len(), d);
    for (i, row) in rows.iter().enumerate() {
        for &(j, v) in row {
            features[(i, j)] = v;
        }
    }
    Dataset::from_raw(features, labels)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_reorders_labeled_rows_first() {
        let text = "0.0,1.0,1\n2.0,3.0,?\n4.0,5.0,0\n";
        let ds = parse_dense_csv(text.as_bytes()).unwrap();
        assert_eq!(ds.len(), 3);
        assert_eq!(ds.n_labeled, 2);
        assert_eq!(ds.permutation, vec![0, 2, 1]);
        assert_eq!(ds.classes, vec![0, 1]);
        assert_eq!(ds.labels, vec![Some(1), Some(0), None]);
        assert_eq!(ds.features[(1, 0)], 4.0);
        assert_eq!(ds.features[(2, 1)], 3.0);
    }

    #[test]
    fn sparse_line_places_nonzeros() {
        let ds = parse_sparse_text("1 3:0.5 7:2.0\n".as_bytes()).unwrap();
        assert_eq!(ds.dim(), 7);
        let row: Vec<f64> = ds.features.row(0).iter().copied().collect();
        assert_eq!(row, vec![0.0, 0.0, 0.5, 0.0, 0.0, 0.0, 2.0]);
    }

    #[test]
    fn sparse_signed_labels_and_sentinel() {
        let ds = parse_sparse_text("-1 1:1\n? 2:1\n+1 1:2\n".as_bytes()).unwrap();
        assert_eq!(ds.classes, vec![-1, 1]);
        assert_eq!(ds.n_labeled, 2);
        assert_eq!(ds.permutation, vec![0, 2, 1]);
    }

    #[test]
    fn all_unlabeled_is_rejected() {
        let err = parse_dense_csv("1.0,?\n2.0,?\n".as_bytes()).unwrap_err();
        assert!(matches!(err, SklError::Validation(_)));
    }

    #[test]
    fn malformed_rows_report_line() {
        match parse_dense_csv("1.0,0\nabc,1\n".as_bytes()).unwrap_err() {
            SklError::Parse { line, .. } => assert_eq!(line, 2),
            e => panic!("unexpected {e:?}"),
        }
        match parse_dense_csv("1.0,0\n1.0,2.0,1\n".as_bytes()).unwrap_err() {
            SklError::Parse { line, .. } => assert_eq!(line, 2),
            e => panic!("unexpected {e:?}"),
        }
        match parse_sparse_text("1 1:2\n0 0:1\n".as_bytes()).unwrap_err() {
            SklError::Parse { line, .. } => assert_eq!(line, 2),
            e => panic!("unexpected {e:?}"),
        }
        match parse_sparse_text("1 1:2\nx 1:1\n".as_bytes()).unwrap_err() {
            SklError::Parse { line, .. } => assert_eq!(line, 2),
            e => panic!("unexpected {e:?}"),
        }
    }

    #[test]
    fn csv_roundtrip_preserves_original_order() {
        let text = "0.5,1,1\n2,3,?\n4,5.25,0\n";
        let ds = parse_dense_csv(text.as_bytes()).unwrap();
        let mut buf = Vec::new();
        ds.write_csv(&mut buf).unwrap();
        let again = parse_dense_csv(buf.as_slice()).unwrap();
        assert_eq!(ds, again);
        assert_eq!(ds.digest(), again.digest());
    }
}
