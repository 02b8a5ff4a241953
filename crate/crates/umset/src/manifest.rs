//! Generated-dataset directories: per-set feature CSVs, a labeled test CSV,
//! and a JSON manifest recording the priors, sizes, and seed so the exact
//! collection can be re-ingested later.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use umset_core::datagen::{FeatureMatrix, LabeledPool, USetCollection};
use umset_core::transition::{PriorSpec, TransitionError};

use crate::export::{write_atomic, ExportError};
use crate::ingest::{load_feature_csv, IngestError};

pub const MANIFEST_FILE: &str = "manifest.json";
const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}: {detail}")]
    Format { path: String, detail: String },
    #[error("manifest {path} has unsupported version {found} (expected {expected})")]
    Version {
        path: String,
        found: u32,
        expected: u32,
    },
    #[error("set file {file} holds {found} rows, manifest says {expected}")]
    SizeMismatch {
        file: String,
        found: usize,
        expected: usize,
    },
    #[error(transparent)]
    Export(#[from] ExportError),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Priors(#[from] TransitionError),
}

/// The on-disk description of a generated problem instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub seed: u64,
    pub dataset: String,
    pub pi_d: f64,
    /// True per-set class priors used for the composition.
    pub priors: Vec<f64>,
    /// Mixing weights (realized `n_j / Σ n_j`).
    pub rhos: Vec<f64>,
    pub sizes: Vec<usize>,
    pub set_files: Vec<String>,
    /// Labeled test pool: feature columns then a trailing 0/1 label column.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub test_file: Option<String>,
}

/// Write a collection (plus optional test pool) into `dir`.
pub fn write_collection(
    dir: &Path,
    collection: &USetCollection,
    test_pool: Option<&LabeledPool>,
    dataset: &str,
    seed: u64,
) -> Result<Manifest, ManifestError> {
    let mut set_files = Vec::with_capacity(collection.num_sets());
    for (j, set) in collection.sets().iter().enumerate() {
        let file = format!("set_{j:03}.csv");
        write_atomic(&dir.join(&file), feature_csv(set).as_bytes())?;
        set_files.push(file);
    }
    let test_file = match test_pool {
        Some(pool) => {
            let file = "test.csv".to_owned();
            write_atomic(&dir.join(&file), pool_csv(pool).as_bytes())?;
            Some(file)
        }
        None => None,
    };
    let manifest = Manifest {
        version: MANIFEST_VERSION,
        seed,
        dataset: dataset.to_owned(),
        pi_d: collection.spec().pi_d(),
        priors: collection.spec().pis().to_vec(),
        rhos: collection.spec().rhos().to_vec(),
        sizes: collection.set_sizes(),
        set_files,
        test_file,
    };
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    write_atomic(&dir.join(MANIFEST_FILE), json.as_bytes())?;
    Ok(manifest)
}

/// Re-ingest a generated directory into the exact original collection.
pub fn load_collection(
    dir: &Path,
) -> Result<(USetCollection, Option<LabeledPool>, Manifest), ManifestError> {
    let manifest = read_manifest(&manifest_path(dir))?;
    let spec = PriorSpec::new(
        manifest.priors.clone(),
        manifest.rhos.clone(),
        manifest.pi_d,
    )?;
    let mut sets = Vec::with_capacity(manifest.set_files.len());
    for (file, &expected) in manifest.set_files.iter().zip(&manifest.sizes) {
        let matrix = load_feature_csv(&dir.join(file))?;
        if matrix.num_rows() != expected {
            return Err(ManifestError::SizeMismatch {
                file: file.clone(),
                found: matrix.num_rows(),
                expected,
            });
        }
        sets.push(matrix);
    }
    let collection = USetCollection::new(sets, spec);
    let test_pool = match &manifest.test_file {
        Some(file) => Some(read_pool_csv(&dir.join(file))?),
        None => None,
    };
    Ok((collection, test_pool, manifest))
}

pub fn manifest_path(dir: &Path) -> PathBuf {
    dir.join(MANIFEST_FILE)
}

fn read_manifest(path: &Path) -> Result<Manifest, ManifestError> {
    let text = std::fs::read_to_string(path).map_err(|source| ManifestError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let manifest: Manifest =
        serde_json::from_str(&text).map_err(|e| ManifestError::Format {
            path: path.display().to_string(),
            detail: e.to_string(),
        })?;
    if manifest.version != MANIFEST_VERSION {
        return Err(ManifestError::Version {
            path: path.display().to_string(),
            found: manifest.version,
            expected: MANIFEST_VERSION,
        });
    }
    Ok(manifest)
}

/// Headerless numeric CSV of a feature matrix; shortest round-trip float
/// formatting reproduces exact bits on reload.
fn feature_csv(matrix: &FeatureMatrix) -> String {
    let mut out = String::new();
    for i in 0..matrix.num_rows() {
        push_row(&mut out, matrix.row(i), None);
    }
    out
}

/// As [`feature_csv`] with a trailing 0/1 label column (1 = positive).
fn pool_csv(pool: &LabeledPool) -> String {
    let mut out = String::new();
    for i in 0..pool.len() {
        let label = u8::from(pool.labels()[i] == 1);
        push_row(&mut out, pool.feature(i), Some(label));
    }
    out
}

fn push_row(out: &mut String, row: &[f64], label: Option<u8>) {
    use std::fmt::Write;
    for (k, v) in row.iter().enumerate() {
        if k > 0 {
            out.push(',');
        }
        write!(out, "{v}").expect("string write");
    }
    if let Some(label) = label {
        write!(out, ",{label}").expect("string write");
    }
    out.push('\n');
}

/// Load a labeled CSV whose trailing column is a 0/1 label (1 = positive).
pub fn read_pool_csv(path: &Path) -> Result<LabeledPool, ManifestError> {
    let raw = crate::ingest::load_csv_last_label(path)?;
    Ok(raw.into_pool(&[1]))
}
