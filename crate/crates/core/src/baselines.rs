//! Comparison risk estimators built from pairs of unlabeled sets: the
//! unbiased classification risk, its balanced variant, the non-negative
//! corrected form, the sort-and-match pairing with squared-gap weights for
//! `m` sets, and the empirical proportion risk.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::datagen::USetCollection;
use crate::math;
use crate::model::Network;

/// Two priors closer than this cannot be rescaled into a finite estimator.
pub const PRIOR_COLLISION_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BaselineError {
    #[error("priors {pi_hi} and {pi_lo} collide (need pi_hi > pi_lo by more than {tol})")]
    PriorCollision { pi_hi: f64, pi_lo: f64, tol: f64 },
    #[error("prior {0} is outside [0, 1]")]
    PriorOutOfRange(f64),
    #[error("test prior {0} is outside the open interval (0, 1)")]
    TestPriorOutOfRange(f64),
    #[error("pairing needs an even number of sets, got {0}")]
    OddSetCount(usize),
    #[error("every pair has identical priors; no informative pair exists")]
    NoInformativePair,
    #[error("pair ({0}, {1}) is out of bounds for {2} sets")]
    PairOutOfBounds(usize, usize, usize),
}

/// Anything that maps a feature vector to a score in `[0, 1]`.
pub trait Scorer {
    fn score_example(&self, x: &[f64]) -> f64;
}

impl Scorer for Network {
    fn score_example(&self, x: &[f64]) -> f64 {
        self.score(x)
    }
}

impl<F: Fn(&[f64]) -> f64> Scorer for F {
    fn score_example(&self, x: &[f64]) -> f64 {
        self(x)
    }
}

/// Binary cross-entropy of a probability score against a `±1` label: the
/// logistic loss of the underlying pre-sigmoid margin.
pub fn binary_loss(f: f64, y: i8) -> f64 {
    let p = if y == 1 { f } else { 1.0 - f };
    -math::ln(p.clamp(1e-12, 1.0))
}

/// Derivative of [`binary_loss`] w.r.t. the score.
pub(crate) fn binary_loss_slope(f: f64, y: i8) -> f64 {
    if y == 1 {
        -1.0 / f.max(1e-12)
    } else {
        1.0 / (1.0 - f).max(1e-12)
    }
}

/// The four rescaling constants of the pairwise unbiased risk for an ordered
/// pair of sets with priors `pi_hi > pi_lo` and test prior `pi_d`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct U2Coefficients {
    pub c1p: f64,
    pub c1n: f64,
    pub c2p: f64,
    pub c2n: f64,
}

impl U2Coefficients {
    pub fn new(pi_hi: f64, pi_lo: f64, pi_d: f64) -> Result<Self, BaselineError> {
        for pi in [pi_hi, pi_lo] {
            if !(0.0..=1.0).contains(&pi) {
                return Err(BaselineError::PriorOutOfRange(pi));
            }
        }
        if !(pi_d > 0.0 && pi_d < 1.0) {
            return Err(BaselineError::TestPriorOutOfRange(pi_d));
        }
        let gap = pi_hi - pi_lo;
        if gap < PRIOR_COLLISION_TOLERANCE {
            return Err(BaselineError::PriorCollision {
                pi_hi,
                pi_lo,
                tol: PRIOR_COLLISION_TOLERANCE,
            });
        }
        Ok(Self {
            c1p: (1.0 - pi_lo) * pi_d / gap,
            c1n: pi_lo * (1.0 - pi_d) / gap,
            c2p: (1.0 - pi_hi) * pi_d / gap,
            c2n: pi_hi * (1.0 - pi_d) / gap,
        })
    }

    /// Constants of the balanced variant: the test prior fixed at ½.
    pub fn balanced(pi_hi: f64, pi_lo: f64) -> Result<Self, BaselineError> {
        Self::new(pi_hi, pi_lo, 0.5)
    }
}

/// An estimator value split into its positive-class and negative-class
/// parts; `total = pos + neg`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskParts {
    pub total: f64,
    pub pos: f64,
    pub neg: f64,
}

/// Pairwise unbiased risk from the scores of the two sets (higher-prior set
/// first):
///
/// ```text
/// pos = (c1p/n₁)·Σ ℓ(f, +1)  −  (c2p/n₂)·Σ ℓ(f, +1)
/// neg = −(c1n/n₁)·Σ ℓ(f, −1) +  (c2n/n₂)·Σ ℓ(f, −1)
/// ```
pub fn u2_risk(scores_hi: &[f64], scores_lo: &[f64], co: &U2Coefficients) -> RiskParts {
    assert!(
        !scores_hi.is_empty() && !scores_lo.is_empty(),
        "both sets must be non-empty"
    );
    let n1 = scores_hi.len() as f64;
    let n2 = scores_lo.len() as f64;
    let sum = |scores: &[f64], y: i8| scores.iter().map(|&f| binary_loss(f, y)).sum::<f64>();
    let pos = co.c1p / n1 * sum(scores_hi, 1) - co.c2p / n2 * sum(scores_lo, 1);
    let neg = -co.c1n / n1 * sum(scores_hi, -1) + co.c2n / n2 * sum(scores_lo, -1);
    RiskParts {
        total: pos + neg,
        pos,
        neg,
    }
}

/// Pairwise balanced risk: [`u2_risk`] with the test prior fixed at ½.
pub fn u2_balanced_risk(
    scores_hi: &[f64],
    scores_lo: &[f64],
    pi_hi: f64,
    pi_lo: f64,
) -> Result<RiskParts, BaselineError> {
    Ok(u2_risk(
        scores_hi,
        scores_lo,
        &U2Coefficients::balanced(pi_hi, pi_lo)?,
    ))
}

/// Generalized leaky-ReLU correction: `r` for `r ≥ 0`, `−κ·r` otherwise.
pub fn leaky_correction(r: f64, kappa: f64) -> f64 {
    debug_assert!(kappa >= 0.0);
    if r >= 0.0 {
        r
    } else {
        -kappa * r
    }
}

/// Non-negative corrected risk: the correction applied to each part, then
/// summed.
pub fn nonneg_corrected_risk(pos: f64, neg: f64, kappa: f64) -> f64 {
    assert!(kappa >= 0.0, "kappa must be non-negative");
    leaky_correction(pos, kappa) + leaky_correction(neg, kappa)
}

/// A perfect matching of the `m` sets into ordered pairs (higher prior
/// first) plus normalized combination weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairingPlan {
    pairs: Vec<(usize, usize)>,
    weights: Vec<f64>,
}

impl PairingPlan {
    /// Ordered `(high-prior set, low-prior set)` index pairs.
    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    /// Weights aligned with [`pairs`](Self::pairs); non-negative, summing to
    /// one. Pairs with identical priors get weight zero.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn num_pairs(&self) -> usize {
        self.pairs.len()
    }
}

/// Sort-and-match pairing: the largest prior with the smallest, the second
/// largest with the second smallest, and so on; pair weights proportional to
/// the squared prior gap, normalized to sum to one.
///
/// The sorted matching is the optimal strategy for equal set sizes; when
/// `equal_sizes` is false it is still used, with a warning (size-aware
/// matching is out of scope).
pub fn mmc_pair(pis: &[f64], equal_sizes: bool) -> Result<PairingPlan, BaselineError> {
    let m = pis.len();
    if m % 2 != 0 || m == 0 {
        return Err(BaselineError::OddSetCount(m));
    }
    if !equal_sizes {
        log::warn!("unequal set sizes: using the sorted matching tuned for equal sizes");
    }
    let mut order: Vec<usize> = (0..m).collect();
    // Descending by prior; ties broken by index for determinism.
    order.sort_by(|&i, &j| pis[j].partial_cmp(&pis[i]).unwrap().then_with(|| i.cmp(&j)));
    let k = m / 2;
    let mut pairs = Vec::with_capacity(k);
    let mut weights = Vec::with_capacity(k);
    for idx in 0..k {
        let hi = order[idx];
        let lo = order[m - 1 - idx];
        let gap = pis[hi] - pis[lo];
        pairs.push((hi, lo));
        weights.push(gap * gap);
    }
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return Err(BaselineError::NoInformativePair);
    }
    for w in &mut weights {
        *w /= total;
    }
    Ok(PairingPlan { pairs, weights })
}

/// Which pairwise estimator the combined objective uses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum PairVariant {
    /// Balanced risk (test prior fixed at ½).
    Balanced,
    /// Unbiased classification risk at the true test prior.
    Unbiased,
    /// Unbiased risk with the leaky non-negative correction.
    Corrected(f64),
}

/// Weighted sum of per-pair risks over the collection, under the
/// collection's own priors. Pairs with weight zero are skipped.
pub fn mmc_objective<S: Scorer>(
    collection: &USetCollection,
    plan: &PairingPlan,
    variant: PairVariant,
    scorer: &S,
) -> Result<f64, BaselineError> {
    mmc_objective_with_priors(
        collection.sets(),
        collection.spec().pis(),
        collection.spec().pi_d(),
        plan,
        variant,
        scorer,
    )
}

/// As [`mmc_objective`] with the priors supplied explicitly — the form a
/// trainer uses when its believed priors differ from the true ones.
pub fn mmc_objective_with_priors<S: Scorer>(
    sets: &[crate::datagen::FeatureMatrix],
    pis: &[f64],
    pi_d: f64,
    plan: &PairingPlan,
    variant: PairVariant,
    scorer: &S,
) -> Result<f64, BaselineError> {
    let mut total = 0.0;
    for (&(hi, lo), &w) in plan.pairs().iter().zip(plan.weights()) {
        if w == 0.0 {
            continue;
        }
        if hi >= sets.len() || lo >= sets.len() {
            return Err(BaselineError::PairOutOfBounds(hi, lo, sets.len()));
        }
        let co = match variant {
            PairVariant::Balanced => U2Coefficients::balanced(pis[hi], pis[lo])?,
            PairVariant::Unbiased | PairVariant::Corrected(_) => {
                U2Coefficients::new(pis[hi], pis[lo], pi_d)?
            }
        };
        let score_set = |j: usize| -> Vec<f64> {
            (0..sets[j].num_rows())
                .map(|i| scorer.score_example(sets[j].row(i)))
                .collect()
        };
        let parts = u2_risk(&score_set(hi), &score_set(lo), &co);
        total += w * match variant {
            PairVariant::Corrected(kappa) => nonneg_corrected_risk(parts.pos, parts.neg, kappa),
            _ => parts.total,
        };
    }
    Ok(total)
}

/// Empirical proportion risk: `Σ_j |π_j − π̂_j|` with `π̂_j` the thresholded
/// positive fraction of set `j` (ties at ½ count as positive).
pub fn proportion_risk<S: Scorer>(collection: &USetCollection, scorer: &S) -> f64 {
    proportion_risk_with_priors(collection.sets(), collection.spec().pis(), scorer)
}

/// As [`proportion_risk`] with the priors supplied explicitly.
pub fn proportion_risk_with_priors<S: Scorer>(
    sets: &[crate::datagen::FeatureMatrix],
    pis: &[f64],
    scorer: &S,
) -> f64 {
    pis.iter()
        .zip(sets)
        .map(|(&pi, set)| {
            assert!(set.num_rows() > 0, "every set must be non-empty");
            let predicted_pos = (0..set.num_rows())
                .filter(|&i| scorer.score_example(set.row(i)) >= 0.5)
                .count();
            let pi_hat = predicted_pos as f64 / set.num_rows() as f64;
            math::fabs(pi - pi_hat)
        })
        .sum()
}
