//! Dataset manifests and CSV ingestion.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tabcluster_core::data::Dataset;
use tabcluster_core::numkit::DenseMatrix;

use crate::error::DataError;

/// Registry of the seven tabular benchmark datasets: (name, N, d, K).
pub const BENCHMARK_DATASETS: [(&str, usize, usize, usize); 7] = [
    ("breast-cancer", 569, 30, 2),
    ("dermatology", 358, 34, 6),
    ("ecoli", 336, 7, 8),
    ("malware", 4465, 241, 2),
    ("mice", 552, 78, 8),
    ("olive", 572, 10, 3),
    ("vehicle", 846, 18, 4),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub name: String,
    /// Relative paths resolve against the manifest's directory.
    pub path: PathBuf,
    /// Header name, or a zero-based column index when there is no header.
    pub label_column: String,
    pub expected_n: usize,
    pub expected_dim: usize,
    pub expected_classes: usize,
    #[serde(default = "default_delimiter")]
    pub delimiter: char,
    #[serde(default = "default_true")]
    pub has_header: bool,
}

fn default_delimiter() -> char {
    ','
}

fn default_true() -> bool {
    true
}

impl DatasetManifest {
    /// Manifest for one of [`BENCHMARK_DATASETS`].
    pub fn registered(name: &str, path: impl Into<PathBuf>, label_column: &str) -> Option<Self> {
        let &(name, n, d, k) = BENCHMARK_DATASETS.iter().find(|e| e.0 == name)?;
        Some(Self {
            name: name.into(),
            path: path.into(),
            label_column: label_column.into(),
            expected_n: n,
            expected_dim: d,
            expected_classes: k,
            delimiter: ',',
            has_header: true,
        })
    }

    pub fn read(path: &Path) -> Result<Self, DataError> {
        let text = fs::read_to_string(path).map_err(|source| DataError::Io {
            path: path.into(),
            source,
        })?;
        let mut m: Self = serde_json::from_str(&text).map_err(|e| DataError::Manifest {
            path: path.into(),
            message: e.to_string(),
        })?;
        if m.path.is_relative() {
            if let Some(dir) = path.parent() {
                m.path = dir.join(&m.path);
            }
        }
        Ok(m)
    }

    pub fn write(&self, path: &Path) -> std::io::Result<()> {
        fs::write(path, serde_json::to_string_pretty(self).expect("manifest serializes") + "\n")
    }
}

/// Reads the CSV named by `manifest`. Every non-label column is a numeric
/// feature; labels are densified to `0..K` in order of first appearance.
/// With `allow_shape_override` a mismatch against the expected N/d/K is
/// accepted.
pub fn load_csv(manifest: &DatasetManifest, allow_shape_override: bool) -> Result<Dataset, DataError> {
    let path = manifest.path.as_path();
    let delimiter = u8::try_from(manifest.delimiter).map_err(|_| DataError::Manifest {
        path: path.into(),
        message: format!("delimiter {:?} is not a single byte", manifest.delimiter),
    })?;
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .has_headers(manifest.has_header)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;

    let headers: Option<Vec<String>> = if manifest.has_header {
        Some(
            reader
                .headers()
                .map_err(|e| csv_error(path, e))?
                .iter()
                .map(|h| h.trim().to_string())
                .collect(),
        )
    } else {
        None
    };
    let label_index = match &headers {
        Some(h) => h.iter().position(|c| *c == manifest.label_column),
        None => manifest.label_column.parse::<usize>().ok(),
    };

    let mut values = Vec::new();
    let mut labels = Vec::new();
    let mut label_ids: HashMap<String, usize> = HashMap::new();
    let mut width = None;
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let row = record.position().map_or(0, |p| p.line());
        let label_index = match label_index {
            Some(i) if i < record.len() => i,
            _ => {
                return Err(DataError::NoLabelColumn {
                    path: path.into(),
                    column: manifest.label_column.clone(),
                })
            }
        };
        width.get_or_insert(record.len());
        let column_name = |c: usize| headers.as_ref().map_or_else(|| c.to_string(), |h| h[c].clone());
        for (c, cell) in record.iter().enumerate() {
            let cell = cell.trim();
            if cell.is_empty() || cell == "?" || cell.eq_ignore_ascii_case("na") || cell.eq_ignore_ascii_case("nan") {
                return Err(DataError::Missing {
                    path: path.into(),
                    row,
                    column: column_name(c),
                });
            }
            if c == label_index {
                let next = label_ids.len();
                labels.push(*label_ids.entry(cell.to_string()).or_insert(next));
                continue;
            }
            match cell.parse::<f64>() {
                Ok(v) if v.is_finite() => values.push(v),
                _ => {
                    return Err(DataError::NonNumeric {
                        path: path.into(),
                        row,
                        column: column_name(c),
                        value: cell.to_string(),
                    })
                }
            }
        }
    }
    let n = labels.len();
    let d = width.map_or(0, |w| w - 1);
    let k = label_ids.len();
    if !allow_shape_override
        && (n, d, k) != (manifest.expected_n, manifest.expected_dim, manifest.expected_classes)
    {
        return Err(DataError::ShapeMismatch {
            name: manifest.name.clone(),
            expected: (manifest.expected_n, manifest.expected_dim, manifest.expected_classes),
            found: (n, d, k),
        });
    }
    let invalid = |source| DataError::Invalid {
        name: manifest.name.clone(),
        source,
    };
    let x = DenseMatrix::from_vec(n, d, values).map_err(invalid)?;
    Dataset::new(manifest.name.clone(), x, labels, k).map_err(invalid)
}

fn csv_error(path: &Path, e: csv::Error) -> DataError {
    let row = e.position().map_or(0, |p| p.line());
    match e.into_kind() {
        csv::ErrorKind::Io(source) => DataError::Io {
            path: path.into(),
            source,
        },
        kind => DataError::Parse {
            path: path.into(),
            row,
            message: format!("{kind:?}"),
        },
    }
}

/// Writes `ds` as a headered CSV (`f0..f{d-1}`, `label`) plus a manifest
/// next to it, and returns the manifest path.
pub fn write_csv_with_manifest(ds: &Dataset, csv_path: &Path) -> std::io::Result<PathBuf> {
    let mut w = csv::Writer::from_path(csv_path)?;
    let mut header: Vec<String> = (0..ds.dim()).map(|j| format!("f{j}")).collect();
    header.push("label".into());
    w.write_record(&header)?;
    for (i, row) in ds.x.row_iter().enumerate() {
        let mut rec: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        rec.push(ds.y[i].to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    let manifest = DatasetManifest {
        name: ds.name.clone(),
        path: PathBuf::from(csv_path.file_name().expect("csv path has a file name")),
        label_column: "label".into(),
        expected_n: ds.n(),
        expected_dim: ds.dim(),
        expected_classes: ds.k,
        delimiter: ',',
        has_header: true,
    };
    let manifest_path = csv_path.with_extension("json");
    manifest.write(&manifest_path)?;
    Ok(manifest_path)
}
