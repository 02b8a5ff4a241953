//! Dataset loaders: IDX image/label files (big-endian, magic 2051/2049) and
//! numeric CSV with a designated label column.

use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use byteorder::{BigEndian, ReadBytesExt};
use thiserror::Error;
use umset_core::datagen::{binarize_labels, FeatureMatrix, LabeledPool};

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("cannot open {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}: bad magic number {found:#010x}, expected {expected:#010x}")]
    BadMagic {
        path: String,
        found: u32,
        expected: u32,
    },
    #[error("{path}: truncated payload ({detail})")]
    Truncated { path: String, detail: String },
    #[error("{images} holds {image_count} images but {labels} holds {label_count} labels")]
    CountMismatch {
        images: String,
        labels: String,
        image_count: usize,
        label_count: usize,
    },
    #[error("{path}:{row}: expected {expected} columns, found {found}")]
    RaggedRow {
        path: String,
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("{path}:{row}: cannot parse {cell:?} as a number")]
    NonNumericCell {
        path: String,
        row: usize,
        cell: String,
    },
    #[error("{path}:{row}: label {value} is not a non-negative integer")]
    BadLabel { path: String, row: usize, value: f64 },
    #[error("{path}: label column {column} out of range for {columns} columns")]
    LabelColumnOutOfRange {
        path: String,
        column: usize,
        columns: usize,
    },
    #[error("{path}: file holds no data rows")]
    Empty { path: String },
}

/// A loaded dataset before binarization: feature vectors and raw integer
/// class ids.
#[derive(Debug, Clone, PartialEq)]
pub struct RawDataset {
    pub features: FeatureMatrix,
    pub labels: Vec<u32>,
    pub name: String,
}

impl RawDataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Binarize: class ids in `positive_classes` become `+1`, the rest `−1`.
    pub fn into_pool(self, positive_classes: &[u32]) -> LabeledPool {
        let labels = binarize_labels(&self.labels, positive_classes);
        LabeledPool::new(self.features, labels, None)
    }
}

fn io_err(path: &Path, source: std::io::Error) -> IngestError {
    IngestError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Load an IDX image/label file pair. Pixels are scaled to `[0, 1]` and
/// images flattened row-major.
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<RawDataset, IngestError> {
    let images = read_idx_images(images_path)?;
    let labels = read_idx_labels(labels_path)?;
    if images.num_rows() != labels.len() {
        return Err(IngestError::CountMismatch {
            images: images_path.display().to_string(),
            labels: labels_path.display().to_string(),
            image_count: images.num_rows(),
            label_count: labels.len(),
        });
    }
    let name = images_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "idx".to_owned());
    Ok(RawDataset {
        features: images,
        labels,
        name,
    })
}

fn read_idx_images(path: &Path) -> Result<FeatureMatrix, IngestError> {
    let mut reader = BufReader::new(File::open(path).map_err(|e| io_err(path, e))?);
    let magic = reader
        .read_u32::<BigEndian>()
        .map_err(|e| io_err(path, e))?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(IngestError::BadMagic {
            path: path.display().to_string(),
            found: magic,
            expected: IDX_IMAGES_MAGIC,
        });
    }
    let count = reader.read_u32::<BigEndian>().map_err(|e| io_err(path, e))? as usize;
    let rows = reader.read_u32::<BigEndian>().map_err(|e| io_err(path, e))? as usize;
    let cols = reader.read_u32::<BigEndian>().map_err(|e| io_err(path, e))? as usize;
    let pixels = rows * cols;
    let mut payload = Vec::new();
    reader
        .read_to_end(&mut payload)
        .map_err(|e| io_err(path, e))?;
    if payload.len() != count * pixels {
        return Err(IngestError::Truncated {
            path: path.display().to_string(),
            detail: format!(
                "{} pixel bytes for {count} images of {pixels} pixels",
                payload.len()
            ),
        });
    }
    let mut features = FeatureMatrix::with_capacity(pixels.max(1), count);
    let mut row = vec![0.0; pixels.max(1)];
    for image in payload.chunks_exact(pixels) {
        for (slot, &byte) in row.iter_mut().zip(image) {
            *slot = byte as f64 / 255.0;
        }
        features.push_row(&row);
    }
    Ok(features)
}

fn read_idx_labels(path: &Path) -> Result<Vec<u32>, IngestError> {
    let mut reader = BufReader::new(File::open(path).map_err(|e| io_err(path, e))?);
    let magic = reader
        .read_u32::<BigEndian>()
        .map_err(|e| io_err(path, e))?;
    if magic != IDX_LABELS_MAGIC {
        return Err(IngestError::BadMagic {
            path: path.display().to_string(),
            found: magic,
            expected: IDX_LABELS_MAGIC,
        });
    }
    let count = reader.read_u32::<BigEndian>().map_err(|e| io_err(path, e))? as usize;
    let mut payload = Vec::new();
    reader
        .read_to_end(&mut payload)
        .map_err(|e| io_err(path, e))?;
    if payload.len() != count {
        return Err(IngestError::Truncated {
            path: path.display().to_string(),
            detail: format!("{} label bytes for {count} entries", payload.len()),
        });
    }
    Ok(payload.into_iter().map(u32::from).collect())
}

/// Load a rectangular numeric CSV. Column `label_column` becomes the integer
/// class id; the remaining columns become the feature vector in file order.
/// A single non-numeric header row is skipped automatically.
pub fn load_csv(path: &Path, label_column: usize) -> Result<RawDataset, IngestError> {
    let rows = read_numeric_csv(path)?;
    dataset_from_rows(path, rows, label_column)
}

fn dataset_from_rows(
    path: &Path,
    rows: Vec<Vec<f64>>,
    label_column: usize,
) -> Result<RawDataset, IngestError> {
    let columns = rows[0].len();
    if label_column >= columns {
        return Err(IngestError::LabelColumnOutOfRange {
            path: path.display().to_string(),
            column: label_column,
            columns,
        });
    }
    let dim = columns - 1;
    let mut features = FeatureMatrix::with_capacity(dim.max(1), rows.len());
    let mut labels = Vec::with_capacity(rows.len());
    let mut feature_row = Vec::with_capacity(dim.max(1));
    for (row_no, row) in rows.iter().enumerate() {
        let raw = row[label_column];
        if raw < 0.0 || raw.fract() != 0.0 || raw > u32::MAX as f64 {
            return Err(IngestError::BadLabel {
                path: path.display().to_string(),
                row: row_no + 1,
                value: raw,
            });
        }
        labels.push(raw as u32);
        feature_row.clear();
        for (c, &value) in row.iter().enumerate() {
            if c != label_column {
                feature_row.push(value);
            }
        }
        features.push_row(&feature_row);
    }
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "csv".to_owned());
    Ok(RawDataset {
        features,
        labels,
        name,
    })
}

/// As [`load_csv`] with the trailing column as the label.
pub fn load_csv_last_label(path: &Path) -> Result<RawDataset, IngestError> {
    let rows = read_numeric_csv(path)?;
    let columns = rows[0].len();
    dataset_from_rows(path, rows, columns - 1)
}

/// Load an unlabeled numeric CSV as a feature matrix (used for generated
/// set files).
pub fn load_feature_csv(path: &Path) -> Result<FeatureMatrix, IngestError> {
    let rows = read_numeric_csv(path)?;
    let dim = rows[0].len();
    let mut features = FeatureMatrix::with_capacity(dim, rows.len());
    for row in &rows {
        features.push_row(row);
    }
    Ok(features)
}

/// Shared CSV scan: rectangularity enforced, optional header skipped, every
/// remaining cell parsed as `f64`.
fn read_numeric_csv(path: &Path) -> Result<Vec<Vec<f64>>, IngestError> {
    let reader = BufReader::new(File::open(path).map_err(|e| io_err(path, e))?);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut columns = None;
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| io_err(path, e))?;
        let trimmed = line.trim_end_matches('\r');
        if trimmed.is_empty() {
            continue;
        }
        let cells: Vec<&str> = trimmed.split(',').collect();
        let expected = *columns.get_or_insert(cells.len());
        if cells.len() != expected {
            return Err(IngestError::RaggedRow {
                path: path.display().to_string(),
                row: idx + 1,
                expected,
                found: cells.len(),
            });
        }
        let mut parsed = Vec::with_capacity(cells.len());
        let mut bad_cell = None;
        for cell in &cells {
            match cell.trim().parse::<f64>() {
                Ok(v) => parsed.push(v),
                Err(_) => {
                    bad_cell = Some((*cell).to_owned());
                    break;
                }
            }
        }
        match bad_cell {
            None => rows.push(parsed),
            Some(cell) => {
                // A single leading non-numeric row is a header.
                if idx == 0 {
                    continue;
                }
                return Err(IngestError::NonNumericCell {
                    path: path.display().to_string(),
                    row: idx + 1,
                    cell,
                });
            }
        }
    }
    if rows.is_empty() {
        return Err(IngestError::Empty {
            path: path.display().to_string(),
        });
    }
    Ok(rows)
}
