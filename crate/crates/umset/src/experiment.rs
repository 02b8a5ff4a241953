//! Multi-seed experiment execution: per-seed data construction and training,
//! aggregation across seeds, and axis sweeps. Trials are independent and run
//! in parallel (capped by `UMSET_THREADS`); results are deterministic per
//! seed regardless of thread count.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use umset_core::datagen::{
    build_usets, make_gaussian_pool, partition_sizes, perturb_priors, sample_priors,
    DatagenError, LabeledPool, USetCollection,
};
use umset_core::harness::{train, HarnessError, TrainSettings, TrialRecord};
use umset_core::model::Network;
use umset_core::transition::{PriorSpec, TransitionError};

use crate::config::{ConfigError, DataSource, ExperimentConfig, PriorsConfig, SweepConfig};
use crate::ingest::{load_csv, load_idx, IngestError};
use crate::manifest::{load_collection, ManifestError};

/// Environment variable capping trial parallelism.
pub const THREADS_ENV: &str = "UMSET_THREADS";

/// RNG stream ids; disjoint from the harness's internal streams (0, 1).
const STREAM_DATA: u64 = 10;
const STREAM_NOISE: u64 = 11;

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Manifest(#[from] ManifestError),
    #[error(transparent)]
    Datagen(#[from] DatagenError),
    #[error(transparent)]
    Priors(#[from] TransitionError),
    #[error(transparent)]
    Harness(#[from] HarnessError),
    #[error("{0}")]
    Unsupported(String),
}

/// One seed's outcome: a record plus trained model, or the failure text.
#[derive(Debug)]
pub struct TrialOutcome {
    pub seed: u64,
    pub record: Option<TrialRecord>,
    pub network: Option<Network>,
    pub error: Option<String>,
}

/// Mean/std of the final test error over successful seeds (population
/// standard deviation; zero for a single seed).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub succeeded: usize,
    pub failed: usize,
    pub mean_error: Option<f64>,
    pub std_error: Option<f64>,
    pub mean_wall_secs: Option<f64>,
}

#[derive(Debug)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub fingerprint: String,
    pub trials: Vec<TrialOutcome>,
    pub aggregate: Aggregate,
}

/// Source data shared by every trial of an experiment.
pub enum SourceData {
    /// Pools are generated per trial from the seed.
    Gaussian {
        dim: usize,
        mean_sep: f64,
        n_test: usize,
        n_pool: Option<usize>,
    },
    /// A fixed labeled pool pair (real datasets); sets are sampled per trial.
    Pools {
        train: LabeledPool,
        test: LabeledPool,
        pi_d: f64,
    },
    /// A fully fixed collection (generated directories); only training
    /// randomness varies across trials.
    Fixed {
        collection: USetCollection,
        test: Option<LabeledPool>,
    },
}

impl SourceData {
    pub fn load(config: &ExperimentConfig) -> Result<Self, RunError> {
        match &config.data {
            DataSource::Gaussian {
                dim,
                mean_sep,
                n_test,
                n_pool,
            } => Ok(SourceData::Gaussian {
                dim: *dim,
                mean_sep: *mean_sep,
                n_test: *n_test,
                n_pool: *n_pool,
            }),
            DataSource::Manifest { path } => {
                let (collection, test, _) = load_collection(path)?;
                Ok(SourceData::Fixed { collection, test })
            }
            DataSource::Idx {
                train_images,
                train_labels,
                test_images,
                test_labels,
                positive_classes,
            } => {
                let train = load_idx(train_images, train_labels)?.into_pool(positive_classes);
                let test = load_idx(test_images, test_labels)?.into_pool(positive_classes);
                let pi_d = empirical_prior(&test)?;
                Ok(SourceData::Pools { train, test, pi_d })
            }
            DataSource::Csv {
                train,
                test,
                label_column,
                positive_classes,
            } => {
                let train = load_csv(train, *label_column)?.into_pool(positive_classes);
                let test = load_csv(test, *label_column)?.into_pool(positive_classes);
                let pi_d = empirical_prior(&test)?;
                Ok(SourceData::Pools { train, test, pi_d })
            }
        }
    }
}

/// The test prior is read off the test pool construction.
fn empirical_prior(pool: &LabeledPool) -> Result<f64, RunError> {
    let pi_d = pool.num_positives() as f64 / pool.len().max(1) as f64;
    if !(pi_d > 0.0 && pi_d < 1.0) {
        return Err(RunError::Unsupported(format!(
            "test pool positive fraction {pi_d} leaves no usable test prior"
        )));
    }
    Ok(pi_d)
}

/// Everything a single trial trains on.
pub struct TrialData {
    pub collection: USetCollection,
    pub test: Option<LabeledPool>,
    /// Priors the method believes (after noise injection).
    pub believed: PriorSpec,
}

/// Construct the per-trial problem: sample priors and sizes, draw the sets,
/// and perturb the priors the method will believe. All randomness comes
/// from streams of `seed`, so a trial is a pure function of `(config, seed)`.
pub fn build_trial_data(
    config: &ExperimentConfig,
    source: &SourceData,
    seed: u64,
) -> Result<TrialData, RunError> {
    let mut data_rng = ChaCha8Rng::seed_from_u64(seed);
    data_rng.set_stream(STREAM_DATA);
    let mut noise_rng = ChaCha8Rng::seed_from_u64(seed);
    noise_rng.set_stream(STREAM_NOISE);

    if let SourceData::Fixed { collection, test } = source {
        let believed = perturb_priors(collection.spec().pis(), config.prior_noise, &mut noise_rng);
        let believed = PriorSpec::new(
            believed,
            collection.spec().rhos().to_vec(),
            collection.spec().pi_d(),
        )?;
        return Ok(TrialData {
            collection: collection.clone(),
            test: test.clone(),
            believed,
        });
    }

    let m = config.m.expect("validated");
    let n_tr = config.n_tr.expect("validated");
    let pis = match &config.priors {
        PriorsConfig::Sample { lo, hi } => sample_priors(m, *lo, *hi, &mut data_rng)?,
        PriorsConfig::Fixed(pis) => pis.clone(),
    };
    let sizes = partition_sizes(config.sizes, m, n_tr, &mut data_rng)?;

    let (pool, test, pi_d) = match source {
        SourceData::Gaussian {
            dim,
            mean_sep,
            n_test,
            n_pool,
        } => {
            let pi_d = config.pi_d.expect("validated");
            let pool_size = n_pool.unwrap_or(2 * n_tr);
            let pool = make_gaussian_pool(pool_size, *dim, *mean_sep, pi_d, &mut data_rng);
            let test = make_gaussian_pool(*n_test, *dim, *mean_sep, pi_d, &mut data_rng);
            (pool, Some(test), pi_d)
        }
        SourceData::Pools { train, test, pi_d } => (train.clone(), Some(test.clone()), *pi_d),
        SourceData::Fixed { .. } => unreachable!(),
    };

    let true_spec = PriorSpec::from_set_sizes(pis.clone(), &sizes, pi_d)?;
    let collection = build_usets(&pool, &true_spec, &sizes, &mut data_rng)?;
    let believed_pis = perturb_priors(&pis, config.prior_noise, &mut noise_rng);
    let believed = PriorSpec::from_set_sizes(believed_pis, &sizes, pi_d)?;
    Ok(TrialData {
        collection,
        test,
        believed,
    })
}

/// Train one seed end to end, timing the run.
pub fn run_trial(
    config: &ExperimentConfig,
    source: &SourceData,
    seed: u64,
) -> Result<(Network, TrialRecord), RunError> {
    let start = Instant::now();
    let data = build_trial_data(config, source, seed)?;
    let settings = TrainSettings {
        method: config.method,
        epochs: config.epochs,
        batch_size: config.batch_size,
        learning_rate: config.effective_learning_rate(),
        lr_decay: config.lr_decay,
        weight_decay: config.weight_decay,
        hidden: config.hidden.clone(),
    };
    let (network, mut record) = train(
        &data.collection,
        &data.believed,
        &settings,
        data.test.as_ref(),
        seed,
    )?;
    record.wall_secs = start.elapsed().as_secs_f64();
    Ok((network, record))
}

/// Run every seed of the experiment (in parallel) and aggregate.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentResult, RunError> {
    let source = SourceData::load(config)?;
    run_experiment_with_source(config, &source)
}

pub fn run_experiment_with_source(
    config: &ExperimentConfig,
    source: &SourceData,
) -> Result<ExperimentResult, RunError> {
    let trials: Vec<TrialOutcome> = in_thread_pool(|| {
        config
            .seeds
            .par_iter()
            .map(|&seed| match run_trial(config, source, seed) {
                Ok((network, record)) => TrialOutcome {
                    seed,
                    record: Some(record),
                    network: Some(network),
                    error: None,
                },
                Err(e) => TrialOutcome {
                    seed,
                    record: None,
                    network: None,
                    error: Some(e.to_string()),
                },
            })
            .collect()
    });

    for trial in &trials {
        if let Some(error) = &trial.error {
            log::warn!(
                "seed {} failed: {error}; aggregate covers remaining seeds",
                trial.seed
            );
        }
    }
    let aggregate = aggregate(&trials);
    Ok(ExperimentResult {
        fingerprint: config.fingerprint(),
        config: config.clone(),
        trials,
        aggregate,
    })
}

fn aggregate(trials: &[TrialOutcome]) -> Aggregate {
    let errors: Vec<f64> = trials
        .iter()
        .filter_map(|t| t.record.as_ref().and_then(|r| r.final_test_error))
        .collect();
    let walls: Vec<f64> = trials
        .iter()
        .filter_map(|t| t.record.as_ref().map(|r| r.wall_secs))
        .collect();
    let succeeded = trials.iter().filter(|t| t.record.is_some()).count();
    let failed = trials.len() - succeeded;
    let stats = |values: &[f64]| -> Option<(f64, f64)> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        Some((mean, var.sqrt()))
    };
    let err_stats = stats(&errors);
    Aggregate {
        succeeded,
        failed,
        mean_error: err_stats.map(|s| s.0),
        std_error: err_stats.map(|s| s.1),
        mean_wall_secs: stats(&walls).map(|s| s.0),
    }
}

/// One experiment per axis value over a shared seed list and shared source
/// data.
pub fn sweep(config: &SweepConfig) -> Result<Vec<(f64, ExperimentResult)>, RunError> {
    let source = SourceData::load(&config.base)?;
    if matches!(source, SourceData::Fixed { .. })
        && matches!(config.axis, crate::config::SweepAxis::SetNumber)
    {
        return Err(RunError::Unsupported(
            "set_number sweeps need a resampleable source, not a fixed manifest".into(),
        ));
    }
    let mut cells = Vec::with_capacity(config.values.len());
    for &value in &config.values {
        let cell_config = config.cell(value);
        let result = run_experiment_with_source(&cell_config, &source)?;
        cells.push((value, result));
    }
    Ok(cells)
}

/// Run `body` inside a rayon pool sized by `UMSET_THREADS` when set.
fn in_thread_pool<T: Send>(body: impl FnOnce() -> T + Send) -> T {
    match std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n > 0)
    {
        Some(threads) => rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .expect("thread pool")
            .install(body),
        None => body(),
    }
}
