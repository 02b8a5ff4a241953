//! Problem-instance generation: synthetic pools with analytically known
//! posteriors, prior sampling, set-size schemes, multiclass binarization,
//! and prior-noise injection.
//!
//! Every operation takes an explicit seeded generator, so instances are
//! bit-reproducible per seed.

use alloc::collections::BTreeSet;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::math;
use crate::transition::PriorSpec;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DatagenError {
    #[error("prior range [{lo}, {hi}] is empty or inverted")]
    BadPriorRange { lo: f64, hi: f64 },
    #[error("could not sample non-identical priors from [{lo}, {hi}] after {attempts} attempts")]
    ResampleExhausted { lo: f64, hi: f64, attempts: usize },
    #[error("need at least two sets, got {0}")]
    TooFewSets(usize),
    #[error("total size {n_tr} is smaller than the number of sets {m}")]
    TotalTooSmall { n_tr: usize, m: usize },
    #[error("tau {0} is outside (0, 1]")]
    TauOutOfRange(f64),
    #[error("tau {tau} would shrink sets of base size {base} to zero")]
    TauEmptiesSets { tau: f64, base: usize },
    #[error(
        "pool cannot satisfy the composition: set {set} needs {need} {class} examples, pool has {have}"
    )]
    InsufficientPool {
        set: usize,
        class: &'static str,
        need: usize,
        have: usize,
    },
    #[error("set count mismatch: spec has {spec} priors, {given} sizes given")]
    SizeCountMismatch { spec: usize, given: usize },
}

/// Dense row-major feature storage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    data: Vec<f64>,
    dim: usize,
}

impl FeatureMatrix {
    pub fn new(dim: usize) -> Self {
        assert!(dim >= 1);
        Self { data: Vec::new(), dim }
    }

    pub fn with_capacity(dim: usize, rows: usize) -> Self {
        assert!(dim >= 1);
        Self {
            data: Vec::with_capacity(dim * rows),
            dim,
        }
    }

    pub fn push_row(&mut self, row: &[f64]) {
        assert_eq!(row.len(), self.dim);
        self.data.extend_from_slice(row);
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn num_rows(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

/// A fully labeled pool of examples, optionally carrying the true posterior
/// `η(x_i)` when it is known in closed form (synthetic pools).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledPool {
    features: FeatureMatrix,
    labels: Vec<i8>,
    true_posterior: Option<Vec<f64>>,
}

impl LabeledPool {
    pub fn new(
        features: FeatureMatrix,
        labels: Vec<i8>,
        true_posterior: Option<Vec<f64>>,
    ) -> Self {
        assert_eq!(features.num_rows(), labels.len());
        assert!(labels.iter().all(|&y| y == 1 || y == -1));
        if let Some(post) = &true_posterior {
            assert_eq!(post.len(), labels.len());
            assert!(post.iter().all(|&p| (0.0..=1.0).contains(&p)));
        }
        Self {
            features,
            labels,
            true_posterior,
        }
    }

    pub fn features(&self) -> &FeatureMatrix {
        &self.features
    }

    pub fn feature(&self, i: usize) -> &[f64] {
        self.features.row(i)
    }

    pub fn labels(&self) -> &[i8] {
        &self.labels
    }

    pub fn true_posterior(&self) -> Option<&[f64]> {
        self.true_posterior.as_deref()
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.dim()
    }

    pub fn num_positives(&self) -> usize {
        self.labels.iter().filter(|&&y| y == 1).count()
    }
}

/// The training corpus: `m` unlabeled feature sets. The surrogate label of
/// every example in `sets[j]` is `j`; the original binary labels are
/// discarded at construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct USetCollection {
    sets: Vec<FeatureMatrix>,
    spec: PriorSpec,
}

impl USetCollection {
    pub fn new(sets: Vec<FeatureMatrix>, spec: PriorSpec) -> Self {
        assert_eq!(sets.len(), spec.num_sets());
        Self { sets, spec }
    }

    pub fn sets(&self) -> &[FeatureMatrix] {
        &self.sets
    }

    pub fn set(&self, j: usize) -> &FeatureMatrix {
        &self.sets[j]
    }

    /// The spec the collection was generated from (true priors).
    pub fn spec(&self) -> &PriorSpec {
        &self.spec
    }

    pub fn num_sets(&self) -> usize {
        self.sets.len()
    }

    pub fn set_sizes(&self) -> Vec<usize> {
        self.sets.iter().map(FeatureMatrix::num_rows).collect()
    }

    pub fn total_examples(&self) -> usize {
        self.sets.iter().map(FeatureMatrix::num_rows).sum()
    }

    pub fn dim(&self) -> usize {
        self.sets[0].dim()
    }
}

/// How the total training budget `n_tr` is split across the `m` sets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SizeMode {
    /// Every set gets `⌊n_tr/m⌋`.
    Uniform,
    /// `⌈m/2⌉` randomly chosen sets shrink to `⌊τ·n_tr/m⌋`, the rest keep
    /// `⌊n_tr/m⌋`.
    TauShift(f64),
    /// Random positive sizes summing exactly to `n_tr`, drawn uniformly over
    /// compositions via sorted cut points.
    Random,
}

/// Draw `m` class priors i.i.d. uniform on `[lo, hi]`, resampling until they
/// are not all identical (spread above `1e-6`).
pub fn sample_priors<R: Rng>(
    m: usize,
    lo: f64,
    hi: f64,
    rng: &mut R,
) -> Result<Vec<f64>, DatagenError> {
    if m < 2 {
        return Err(DatagenError::TooFewSets(m));
    }
    if !(0.0 <= lo && lo < hi && hi <= 1.0) {
        return Err(DatagenError::BadPriorRange { lo, hi });
    }
    const MAX_ATTEMPTS: usize = 100;
    for _ in 0..MAX_ATTEMPTS {
        let pis: Vec<f64> = (0..m).map(|_| rng.gen_range(lo..hi)).collect();
        let min = pis.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = pis.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if max - min > 1e-6 {
            return Ok(pis);
        }
    }
    Err(DatagenError::ResampleExhausted {
        lo,
        hi,
        attempts: MAX_ATTEMPTS,
    })
}

/// Two-Gaussian pool with closed-form posterior.
///
/// Labels are Bernoulli(`pi_d`) mapped to `{+1, −1}`; positives are
/// `N(+μ, I)` and negatives `N(−μ, I)` with `μ = (mean_sep/2, 0, …)`, so the
/// class means sit `mean_sep` apart along the first axis. The stored
/// posterior is `η(x) = sigmoid(logit(pi_d) + mean_sep · x₁)`.
pub fn make_gaussian_pool<R: Rng>(
    n: usize,
    dim: usize,
    mean_sep: f64,
    pi_d: f64,
    rng: &mut R,
) -> LabeledPool {
    assert!(n >= 1 && dim >= 1);
    assert!(mean_sep > 0.0);
    assert!(pi_d > 0.0 && pi_d < 1.0);
    let mu = mean_sep / 2.0;
    let bias = math::logit(pi_d);
    let mut features = FeatureMatrix::with_capacity(dim, n);
    let mut labels = Vec::with_capacity(n);
    let mut posterior = Vec::with_capacity(n);
    let mut row = alloc::vec![0.0; dim];
    for _ in 0..n {
        let y: i8 = if rng.gen::<f64>() < pi_d { 1 } else { -1 };
        for (k, value) in row.iter_mut().enumerate() {
            let center = if k == 0 { mu * y as f64 } else { 0.0 };
            *value = center + standard_normal(rng);
        }
        labels.push(y);
        posterior.push(math::sigmoid(bias + mean_sep * row[0]));
        features.push_row(&row);
    }
    LabeledPool::new(features, labels, Some(posterior))
}

/// Bayes error of the two-Gaussian problem above: the optimal rule thresholds
/// `x₁` at `−logit(pi_d)/mean_sep`, giving
/// `pi_d·Φ(t − mean_sep/2) + (1−pi_d)·Φ(−t − mean_sep/2)`.
pub fn gaussian_bayes_error(pi_d: f64, mean_sep: f64) -> f64 {
    let t = -math::logit(pi_d) / mean_sep;
    pi_d * math::normal_cdf(t - mean_sep / 2.0)
        + (1.0 - pi_d) * math::normal_cdf(-t - mean_sep / 2.0)
}

fn standard_normal<R: Rng>(rng: &mut R) -> f64 {
    // Box-Muller; one uniform pair per sample keeps the stream layout simple
    // and reproducible.
    let u1: f64 = rng.gen::<f64>().max(f64::MIN_POSITIVE);
    let u2: f64 = rng.gen();
    math::sqrt(-2.0 * math::ln(u1)) * math::cos(2.0 * core::f64::consts::PI * u2)
}

/// Assemble `m` unlabeled sets from a labeled pool with exact composition:
/// set `j` receives `round(n_j·π_j)` positives and the remainder negatives.
///
/// Draws are without replacement within a set, and without replacement
/// across sets while the pool lasts; once a class queue is exhausted the
/// pool is reshuffled and reused with a logged warning.
pub fn build_usets<R: Rng>(
    pool: &LabeledPool,
    spec: &PriorSpec,
    sizes: &[usize],
    rng: &mut R,
) -> Result<USetCollection, DatagenError> {
    if sizes.len() != spec.num_sets() {
        return Err(DatagenError::SizeCountMismatch {
            spec: spec.num_sets(),
            given: sizes.len(),
        });
    }
    let mut pos_queue = ClassQueue::new(pool, 1, rng);
    let mut neg_queue = ClassQueue::new(pool, -1, rng);
    let mut sets = Vec::with_capacity(sizes.len());
    let mut scratch: Vec<usize> = Vec::new();
    for (j, (&n_j, &pi_j)) in sizes.iter().zip(spec.pis()).enumerate() {
        let need_pos = math::round(n_j as f64 * pi_j) as usize;
        let need_neg = n_j - need_pos;
        if need_pos > pos_queue.class_total() {
            return Err(DatagenError::InsufficientPool {
                set: j,
                class: "positive",
                need: need_pos,
                have: pos_queue.class_total(),
            });
        }
        if need_neg > neg_queue.class_total() {
            return Err(DatagenError::InsufficientPool {
                set: j,
                class: "negative",
                need: need_neg,
                have: neg_queue.class_total(),
            });
        }
        scratch.clear();
        pos_queue.draw(need_pos, rng, &mut scratch);
        neg_queue.draw(need_neg, rng, &mut scratch);
        scratch.shuffle(rng);
        let mut set = FeatureMatrix::with_capacity(pool.dim(), n_j);
        for &i in &scratch {
            set.push_row(pool.feature(i));
        }
        sets.push(set);
    }
    Ok(USetCollection::new(sets, spec.clone()))
}

/// Shuffled index queue over one class of the pool; refills (with a warning)
/// when the class is exhausted, falling back to reuse across sets.
struct ClassQueue {
    indices: Vec<usize>,
    cursor: usize,
    reused: bool,
}

impl ClassQueue {
    fn new<R: Rng>(pool: &LabeledPool, label: i8, rng: &mut R) -> Self {
        let mut indices: Vec<usize> = (0..pool.len())
            .filter(|&i| pool.labels()[i] == label)
            .collect();
        indices.shuffle(rng);
        Self {
            indices,
            cursor: 0,
            reused: false,
        }
    }

    fn class_total(&self) -> usize {
        self.indices.len()
    }

    fn draw<R: Rng>(&mut self, k: usize, rng: &mut R, out: &mut Vec<usize>) {
        if self.indices.len() - self.cursor < k {
            if !self.reused {
                log::warn!(
                    "pool exhausted; subsequent sets reuse examples (with-replacement across sets)"
                );
                self.reused = true;
            }
            self.indices.shuffle(rng);
            self.cursor = 0;
        }
        out.extend_from_slice(&self.indices[self.cursor..self.cursor + k]);
        self.cursor += k;
    }
}

/// Split `n_tr` into `m` per-set sizes according to `mode`.
pub fn partition_sizes<R: Rng>(
    mode: SizeMode,
    m: usize,
    n_tr: usize,
    rng: &mut R,
) -> Result<Vec<usize>, DatagenError> {
    if m < 2 {
        return Err(DatagenError::TooFewSets(m));
    }
    if n_tr < m {
        return Err(DatagenError::TotalTooSmall { n_tr, m });
    }
    let base = n_tr / m;
    match mode {
        SizeMode::Uniform => Ok(alloc::vec![base; m]),
        SizeMode::TauShift(tau) => {
            if !(tau > 0.0 && tau <= 1.0) {
                return Err(DatagenError::TauOutOfRange(tau));
            }
            let small = (tau * (n_tr as f64 / m as f64)) as usize;
            if small == 0 {
                return Err(DatagenError::TauEmptiesSets { tau, base });
            }
            let shrink_count = m.div_ceil(2);
            let chosen: BTreeSet<usize> = rand::seq::index::sample(rng, m, shrink_count)
                .into_iter()
                .collect();
            Ok((0..m)
                .map(|j| if chosen.contains(&j) { small } else { base })
                .collect())
        }
        SizeMode::Random => {
            // Sorted distinct cut points in [1, n_tr−1] induce a uniform
            // composition with every part at least 1.
            let mut cuts: Vec<usize> = rand::seq::index::sample(rng, n_tr - 1, m - 1)
                .into_iter()
                .map(|v| v + 1)
                .collect();
            cuts.sort_unstable();
            let mut sizes = Vec::with_capacity(m);
            let mut prev = 0;
            for &cut in &cuts {
                sizes.push(cut - prev);
                prev = cut;
            }
            sizes.push(n_tr - prev);
            Ok(sizes)
        }
    }
}

/// Shift every prior by `±epsilon` (sign drawn per set), clipped to `[0, 1]`.
pub fn perturb_priors<R: Rng>(pis: &[f64], epsilon: f64, rng: &mut R) -> Vec<f64> {
    assert!(epsilon >= 0.0);
    pis.iter()
        .map(|&pi| {
            let gamma = if rng.gen::<bool>() { 1.0 } else { -1.0 };
            (pi + gamma * epsilon).clamp(0.0, 1.0)
        })
        .collect()
}

/// Map multiclass ids to binary labels: ids in `positive_classes` become
/// `+1`, everything else `−1`.
pub fn binarize_labels(raw_labels: &[u32], positive_classes: &[u32]) -> Vec<i8> {
    raw_labels
        .iter()
        .map(|id| if positive_classes.contains(id) { 1 } else { -1 })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn sample_priors_stay_in_range_and_distinct() {
        let pis = sample_priors(2, 0.1, 0.9, &mut rng(7)).unwrap();
        assert!(pis.iter().all(|&p| (0.1..0.9).contains(&p)));
        assert!((pis[0] - pis[1]).abs() > 1e-6);
    }

    #[test]
    fn sample_priors_mean_near_center() {
        // Law of large numbers over 10 seeds of m=50.
        let mut grand = 0.0;
        for seed in 0..10 {
            let pis = sample_priors(50, 0.1, 0.9, &mut rng(seed)).unwrap();
            grand += pis.iter().sum::<f64>() / 50.0;
        }
        assert!((grand / 10.0 - 0.5).abs() < 0.1);
    }

    #[test]
    fn sample_priors_rejects_degenerate_range() {
        assert!(matches!(
            sample_priors(2, 0.5, 0.5, &mut rng(1)),
            Err(DatagenError::BadPriorRange { .. })
        ));
        // A technically non-empty range that cannot produce the required
        // spread is reported as a resample failure.
        assert!(matches!(
            sample_priors(2, 0.5, 0.5 + 1e-9, &mut rng(1)),
            Err(DatagenError::ResampleExhausted { .. })
        ));
    }

    #[test]
    fn gaussian_pool_posterior_matches_bayes_rule() {
        let pool = make_gaussian_pool(500, 3, 2.0, 0.6, &mut rng(3));
        let mu = 1.0;
        let post = pool.true_posterior().unwrap();
        for i in 0..pool.len() {
            let x = pool.feature(i);
            // Direct Bayes recomputation from the class densities
            // (unnormalized N(±μ, I) along every axis).
            let mut log_p = 0.0;
            let mut log_n = 0.0;
            for (k, &v) in x.iter().enumerate() {
                let c = if k == 0 { mu } else { 0.0 };
                log_p += -0.5 * (v - c) * (v - c);
                log_n += -0.5 * (v + c) * (v + c);
            }
            let wp = 0.6 * math::exp(log_p);
            let wn = 0.4 * math::exp(log_n);
            let eta = wp / (wp + wn);
            assert!(
                (post[i] - eta).abs() < 1e-12,
                "stored {} vs recomputed {eta}",
                post[i]
            );
        }
    }

    #[test]
    fn gaussian_pool_positive_fraction_concentrates() {
        let pool = make_gaussian_pool(10_000, 2, 2.0, 0.7, &mut rng(11));
        let frac = pool.num_positives() as f64 / pool.len() as f64;
        assert!((frac - 0.7).abs() < 0.02);
    }

    #[test]
    fn gaussian_pool_posterior_on_boundary_equals_prior() {
        // On the decision hyperplane x₁ = 0 the class densities agree, so
        // η reduces to the prior.
        let bias = math::logit(0.6);
        assert!((math::sigmoid(bias + 2.0 * 0.0) - 0.6).abs() < 1e-15);
    }

    #[test]
    fn bayes_error_symmetric_case() {
        assert!((gaussian_bayes_error(0.5, 2.0) - math::normal_cdf(-1.0)).abs() < 1e-15);
        assert!((gaussian_bayes_error(0.5, 2.0) - 0.158_655_253_931_457_05).abs() < 1e-12);
    }

    #[test]
    fn build_usets_exact_composition() {
        let pool = make_gaussian_pool(200, 2, 2.0, 0.5, &mut rng(5));
        let spec = PriorSpec::with_uniform_weights(alloc::vec![0.3, 0.6], 0.5).unwrap();
        let col = build_usets(&pool, &spec, &[10, 20], &mut rng(6)).unwrap();
        assert_eq!(col.set_sizes(), alloc::vec![10, 20]);
        // Recover composition by matching rows back to pool labels.
        let count_pos = |j: usize| {
            (0..col.set(j).num_rows())
                .filter(|&i| {
                    let row = col.set(j).row(i);
                    (0..pool.len())
                        .find(|&p| pool.feature(p) == row)
                        .map(|p| pool.labels()[p] == 1)
                        .unwrap()
                })
                .count()
        };
        assert_eq!(count_pos(0), 3); // round(10 · 0.3)
        assert_eq!(count_pos(1), 12); // round(20 · 0.6)
    }

    #[test]
    fn build_usets_all_negative_set() {
        let pool = make_gaussian_pool(100, 2, 2.0, 0.5, &mut rng(5));
        let spec = PriorSpec::with_uniform_weights(alloc::vec![0.0, 0.5], 0.5).unwrap();
        let col = build_usets(&pool, &spec, &[8, 8], &mut rng(2)).unwrap();
        assert_eq!(col.set(0).num_rows(), 8);
    }

    #[test]
    fn build_usets_insufficient_pool() {
        let pool = make_gaussian_pool(20, 2, 2.0, 0.5, &mut rng(5));
        let spec = PriorSpec::with_uniform_weights(alloc::vec![0.99, 0.5], 0.5).unwrap();
        let err = build_usets(&pool, &spec, &[50, 10], &mut rng(2)).unwrap_err();
        assert!(matches!(err, DatagenError::InsufficientPool { set: 0, .. }));
    }

    #[test]
    fn partition_uniform() {
        let sizes = partition_sizes(SizeMode::Uniform, 10, 60_000, &mut rng(0)).unwrap();
        assert_eq!(sizes, alloc::vec![6000; 10]);
        let sizes = partition_sizes(SizeMode::Uniform, 50, 60_000, &mut rng(0)).unwrap();
        assert_eq!(sizes, alloc::vec![1200; 50]);
        assert_eq!(sizes.iter().sum::<usize>(), 60_000);
    }

    #[test]
    fn partition_tau_shift() {
        let sizes = partition_sizes(SizeMode::TauShift(0.2), 10, 60_000, &mut rng(0)).unwrap();
        let small = sizes.iter().filter(|&&s| s == 1200).count();
        let big = sizes.iter().filter(|&&s| s == 6000).count();
        assert_eq!((small, big), (5, 5));
    }

    #[test]
    fn partition_random_sums_exactly() {
        let sizes = partition_sizes(SizeMode::Random, 4, 100, &mut rng(9)).unwrap();
        assert_eq!(sizes.len(), 4);
        assert_eq!(sizes.iter().sum::<usize>(), 100);
        assert!(sizes.iter().all(|&s| s >= 1));
    }

    #[test]
    fn partition_rejects_bad_inputs() {
        assert!(matches!(
            partition_sizes(SizeMode::TauShift(0.0), 4, 100, &mut rng(0)),
            Err(DatagenError::TauOutOfRange(_))
        ));
        assert!(matches!(
            partition_sizes(SizeMode::TauShift(1e-4), 4, 100, &mut rng(0)),
            Err(DatagenError::TauEmptiesSets { .. })
        ));
        assert!(matches!(
            partition_sizes(SizeMode::Uniform, 8, 4, &mut rng(0)),
            Err(DatagenError::TotalTooSmall { .. })
        ));
    }

    #[test]
    fn perturb_priors_identity_at_zero() {
        let pis = alloc::vec![0.2, 0.5, 0.8];
        assert_eq!(perturb_priors(&pis, 0.0, &mut rng(4)), pis);
    }

    #[test]
    fn perturb_priors_clips_and_shifts() {
        let out = perturb_priors(&[0.95], 0.1, &mut rng(4));
        assert!(out[0] == 1.0 || (out[0] - 0.85).abs() < 1e-15);
        for seed in 0..20 {
            let out = perturb_priors(&[0.5], 0.2, &mut rng(seed));
            assert!((out[0] - 0.3).abs() < 1e-15 || (out[0] - 0.7).abs() < 1e-15);
        }
        // Both signs occur across seeds.
        let shifted: Vec<f64> = (0..20)
            .map(|s| perturb_priors(&[0.5], 0.2, &mut rng(s))[0])
            .collect();
        assert!(shifted.iter().any(|&v| v > 0.5) && shifted.iter().any(|&v| v < 0.5));
    }

    #[test]
    fn binarize_even_digits() {
        let even = [0, 2, 4, 6, 8];
        assert_eq!(binarize_labels(&[4], &even), alloc::vec![1]);
        assert_eq!(binarize_labels(&[7], &even), alloc::vec![-1]);
        assert_eq!(binarize_labels(&[1, 2, 3], &[]), alloc::vec![-1, -1, -1]);
    }
}
