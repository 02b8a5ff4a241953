//! Experiment configuration: the JSON document every CLI subcommand
//! consumes. Parse errors report the offending field path.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use umset_core::datagen::SizeMode;
use umset_core::harness::Method;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}: {detail} (at {field})")]
    Schema {
        path: String,
        field: String,
        detail: String,
    },
    #[error("{0}")]
    Invalid(String),
}

/// Where the training pool and held-out test pool come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    /// Synthetic two-Gaussian pools with closed-form posteriors.
    Gaussian {
        dim: usize,
        mean_sep: f64,
        n_test: usize,
        /// Pool to draw sets from; defaults to `2 · n_tr`.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        n_pool: Option<usize>,
    },
    /// A directory written by `umset gen`.
    Manifest { path: PathBuf },
    /// IDX image/label file pairs plus the set of positive class ids.
    Idx {
        train_images: PathBuf,
        train_labels: PathBuf,
        test_images: PathBuf,
        test_labels: PathBuf,
        positive_classes: Vec<u32>,
    },
    /// Labeled numeric CSVs plus the set of positive class ids.
    Csv {
        train: PathBuf,
        test: PathBuf,
        label_column: usize,
        positive_classes: Vec<u32>,
    },
}

impl DataSource {
    /// Short name for summary tables.
    pub fn dataset_name(&self) -> String {
        match self {
            DataSource::Gaussian { dim, mean_sep, .. } => {
                format!("gaussian(dim={dim};sep={mean_sep})")
            }
            DataSource::Manifest { path } => format!("manifest({})", path.display()),
            DataSource::Idx { train_images, .. } => format!(
                "idx({})",
                train_images
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_default()
            ),
            DataSource::Csv { train, .. } => format!(
                "csv({})",
                train
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_default()
            ),
        }
    }
}

/// How per-set class priors are chosen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum PriorsConfig {
    /// i.i.d. uniform on `[lo, hi]`, resampled until not all identical.
    Sample { lo: f64, hi: f64 },
    /// Explicit per-set priors.
    Fixed(Vec<f64>),
}

impl Default for PriorsConfig {
    fn default() -> Self {
        PriorsConfig::Sample { lo: 0.1, hi: 0.9 }
    }
}

fn default_epochs() -> usize {
    300
}

fn default_batch() -> usize {
    256
}

fn default_decay() -> f64 {
    1e-4
}

fn default_hidden() -> Vec<usize> {
    vec![64, 64]
}

fn default_sizes() -> SizeMode {
    SizeMode::Uniform
}

/// One experiment: a method, a data source, the set layout, and training
/// hyperparameters. Every randomized stage is driven by the per-trial seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub method: Method,
    pub data: DataSource,
    /// Number of unlabeled sets (ignored for manifest sources).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    /// Total training examples across sets (ignored for manifest sources).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_tr: Option<usize>,
    /// Test-distribution class prior; required for gaussian sources,
    /// derived from the test labels otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pi_d: Option<f64>,
    #[serde(default)]
    pub priors: PriorsConfig,
    #[serde(default = "default_sizes")]
    pub sizes: SizeMode,
    /// Noise level ε added to each prior as ±ε before training.
    #[serde(default)]
    pub prior_noise: f64,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    /// Base learning rate; defaults to the method's customary value.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub learning_rate: Option<f64>,
    #[serde(default = "default_decay")]
    pub lr_decay: f64,
    #[serde(default)]
    pub weight_decay: f64,
    #[serde(default = "default_hidden")]
    pub hidden: Vec<usize>,
    pub seeds: Vec<u64>,
}

impl ExperimentConfig {
    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text, &path.display().to_string())
    }

    pub fn from_json(text: &str, origin: &str) -> Result<Self, ConfigError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let config: Self =
            serde_path_to_error::deserialize(de).map_err(|e| ConfigError::Schema {
                path: origin.to_owned(),
                field: e.path().to_string(),
                detail: e.inner().to_string(),
            })?;
        config.validate()?;
        Ok(config)
    }

    fn validate(&self) -> Result<(), ConfigError> {
        if self.seeds.is_empty() {
            return Err(ConfigError::Invalid("seeds must be non-empty".into()));
        }
        if self.epochs == 0 {
            return Err(ConfigError::Invalid("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(ConfigError::Invalid("batch_size must be at least 1".into()));
        }
        if self.prior_noise < 0.0 {
            return Err(ConfigError::Invalid("prior_noise must be >= 0".into()));
        }
        let needs_layout = !matches!(self.data, DataSource::Manifest { .. });
        if needs_layout {
            if self.m.is_none() {
                return Err(ConfigError::Invalid(
                    "m is required unless data comes from a manifest".into(),
                ));
            }
            if self.n_tr.is_none() {
                return Err(ConfigError::Invalid(
                    "n_tr is required unless data comes from a manifest".into(),
                ));
            }
        }
        if matches!(self.data, DataSource::Gaussian { .. }) && self.pi_d.is_none() {
            return Err(ConfigError::Invalid(
                "pi_d is required for gaussian data".into(),
            ));
        }
        if let PriorsConfig::Fixed(pis) = &self.priors {
            if let Some(m) = self.m {
                if pis.len() != m {
                    return Err(ConfigError::Invalid(format!(
                        "fixed priors list has {} entries but m = {m}",
                        pis.len()
                    )));
                }
            }
        }
        Ok(())
    }

    /// Resolved base learning rate (explicit value or method default).
    pub fn effective_learning_rate(&self) -> f64 {
        self.learning_rate.unwrap_or(match self.method {
            Method::Umssc => 1e-5,
            _ => 1e-4,
        })
    }

    /// Stable hash of the full configuration, for tagging metric records.
    pub fn fingerprint(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        let mut hasher = DefaultHasher::new();
        canonical.hash(&mut hasher);
        format!("{:016x}", hasher.finish())
    }

    /// Compact description of the layout knobs for summary tables.
    pub fn setting_label(&self) -> String {
        let m = self.m.map_or_else(|| "?".into(), |m| m.to_string());
        let n = self.n_tr.map_or_else(|| "?".into(), |n| n.to_string());
        let sizes = match self.sizes {
            SizeMode::Uniform => "uniform".to_owned(),
            SizeMode::TauShift(tau) => format!("tau={tau}"),
            SizeMode::Random => "random".to_owned(),
        };
        format!("m={m};n_tr={n};sizes={sizes};eps={}", self.prior_noise)
    }
}

/// Which knob a sweep varies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    /// Number of sets `m` (values cast to integers).
    SetNumber,
    /// Size-shift factor τ.
    Tau,
    /// Prior noise ε.
    Epsilon,
}

/// A sweep: the base experiment re-run once per axis value with a shared
/// seed list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub base: ExperimentConfig,
    pub axis: SweepAxis,
    pub values: Vec<f64>,
}

impl SweepConfig {
    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let de = &mut serde_json::Deserializer::from_str(&text);
        let config: Self =
            serde_path_to_error::deserialize(de).map_err(|e| ConfigError::Schema {
                path: path.display().to_string(),
                field: e.path().to_string(),
                detail: e.inner().to_string(),
            })?;
        config.base.validate()?;
        Ok(config)
    }

    /// The base config with the axis set to `value`.
    pub fn cell(&self, value: f64) -> ExperimentConfig {
        let mut config = self.base.clone();
        match self.axis {
            SweepAxis::SetNumber => config.m = Some(value as usize),
            SweepAxis::Tau => config.sizes = SizeMode::TauShift(value),
            SweepAxis::Epsilon => config.prior_noise = value,
        }
        config
    }
}
