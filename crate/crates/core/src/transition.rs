//! The linear-fractional map between the binary class posterior and the
//! surrogate set posteriors.
//!
//! For a problem with per-set class priors `π_j`, mixing weights `ρ_j`, and
//! test prior `π_D`, the posterior `η̄_j(x)` of "x came from set j" relates to
//! the binary posterior `η(x)` through
//!
//! ```text
//! T_j(η) = (a_j·η + b_j) / (c·η + d)
//! a_j = ρ_j (π_j − π_D)        c = Σ_j a_j
//! b_j = ρ_j π_D (1 − π_j)      d = Σ_j b_j
//! ```
//!
//! The map is injective on `[0, 1]` as long as at least two priors differ,
//! its components sum to one, and each component is Lipschitz with constant
//! `2/α²` where `α = min(Σ ρ_j π_j (1−π_D), Σ ρ_j π_D (1−π_j))`.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Weight sums must match 1 to this tolerance; also used for the exact
/// algebraic identities checked in tests.
pub const SUM_TOLERANCE: f64 = 1e-12;

/// Errors from constructing or inverting the transition map.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum TransitionError {
    #[error("need at least two unlabeled sets, got {0}")]
    TooFewSets(usize),
    #[error("got {pis} class priors but {rhos} mixing weights")]
    LengthMismatch { pis: usize, rhos: usize },
    #[error("class prior {value} at index {index} is outside [0, 1]")]
    PriorOutOfRange { index: usize, value: f64 },
    #[error("test prior {0} is outside the open interval (0, 1)")]
    TestPriorOutOfRange(f64),
    #[error("mixing weight {value} at index {index} is not positive")]
    WeightNotPositive { index: usize, value: f64 },
    #[error("mixing weights sum to {0}, expected 1")]
    WeightsNotNormalized(f64),
    #[error("all {0} class priors are identical, so the problem is unsolvable")]
    IdenticalPriors(usize),
    #[error("transition component {0} is constant on [0, 1] and cannot be inverted")]
    DegenerateComponent(usize),
    #[error("inverse produced {0}, outside [0, 1]")]
    InverseOutOfRange(f64),
}

/// One problem instance: the per-set class priors `π_j`, the mixing weights
/// `ρ_j` (must sum to one), and the test-distribution class prior `π_D`.
///
/// Construction validates every invariant, so a `PriorSpec` value is always
/// well formed: at least two sets, priors in `[0, 1]` with at least two of
/// them different, positive weights summing to one, and `π_D` in `(0, 1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorSpec {
    pis: Vec<f64>,
    rhos: Vec<f64>,
    pi_d: f64,
}

impl PriorSpec {
    pub fn new(pis: Vec<f64>, rhos: Vec<f64>, pi_d: f64) -> Result<Self, TransitionError> {
        if pis.len() < 2 {
            return Err(TransitionError::TooFewSets(pis.len()));
        }
        if pis.len() != rhos.len() {
            return Err(TransitionError::LengthMismatch {
                pis: pis.len(),
                rhos: rhos.len(),
            });
        }
        for (index, &value) in pis.iter().enumerate() {
            if !(0.0..=1.0).contains(&value) || value.is_nan() {
                return Err(TransitionError::PriorOutOfRange { index, value });
            }
        }
        if !(pi_d > 0.0 && pi_d < 1.0) {
            return Err(TransitionError::TestPriorOutOfRange(pi_d));
        }
        for (index, &value) in rhos.iter().enumerate() {
            if !(value > 0.0) {
                return Err(TransitionError::WeightNotPositive { index, value });
            }
        }
        let weight_sum: f64 = rhos.iter().sum();
        if crate::math::fabs(weight_sum - 1.0) > SUM_TOLERANCE {
            return Err(TransitionError::WeightsNotNormalized(weight_sum));
        }
        let lo = pis.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = pis.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if !(hi - lo > 0.0) {
            return Err(TransitionError::IdenticalPriors(pis.len()));
        }
        Ok(Self { pis, rhos, pi_d })
    }

    /// Uniform mixing weights `ρ_j = 1/m`.
    pub fn with_uniform_weights(pis: Vec<f64>, pi_d: f64) -> Result<Self, TransitionError> {
        let m = pis.len();
        let rhos = alloc::vec![1.0 / m as f64; m];
        Self::new(pis, rhos, pi_d)
    }

    /// Mixing weights estimated from realized set sizes, `ρ_j = n_j / Σ n_j`.
    pub fn from_set_sizes(
        pis: Vec<f64>,
        sizes: &[usize],
        pi_d: f64,
    ) -> Result<Self, TransitionError> {
        if pis.len() != sizes.len() {
            return Err(TransitionError::LengthMismatch {
                pis: pis.len(),
                rhos: sizes.len(),
            });
        }
        let total: usize = sizes.iter().sum();
        let rhos = sizes.iter().map(|&n| n as f64 / total as f64).collect();
        Self::new(pis, rhos, pi_d)
    }

    pub fn num_sets(&self) -> usize {
        self.pis.len()
    }

    pub fn pis(&self) -> &[f64] {
        &self.pis
    }

    pub fn rhos(&self) -> &[f64] {
        &self.rhos
    }

    pub fn pi_d(&self) -> f64 {
        self.pi_d
    }

    /// Coefficients of the transition map induced by this instance.
    pub fn coefficients(&self) -> TransitionCoefficients {
        TransitionCoefficients::from_spec(self)
    }
}

/// Coefficients `(a_j, b_j, c, d)` of the transition map, plus the mixture
/// mass `α` that controls its Lipschitz constant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionCoefficients {
    a: Vec<f64>,
    b: Vec<f64>,
    c: f64,
    d: f64,
    alpha: f64,
}

impl TransitionCoefficients {
    fn from_spec(spec: &PriorSpec) -> Self {
        let pi_d = spec.pi_d();
        let a: Vec<f64> = spec
            .pis()
            .iter()
            .zip(spec.rhos())
            .map(|(&pi, &rho)| rho * (pi - pi_d))
            .collect();
        let b: Vec<f64> = spec
            .pis()
            .iter()
            .zip(spec.rhos())
            .map(|(&pi, &rho)| rho * pi_d * (1.0 - pi))
            .collect();
        let c = a.iter().sum();
        let d = b.iter().sum();
        let pos_mass: f64 = spec
            .pis()
            .iter()
            .zip(spec.rhos())
            .map(|(&pi, &rho)| rho * pi * (1.0 - pi_d))
            .sum();
        let neg_mass: f64 = d;
        let alpha = pos_mass.min(neg_mass);
        debug_assert!(d > 0.0 && c + d > 0.0 && alpha > 0.0);
        Self { a, b, c, d, alpha }
    }

    /// Number of transition components, one per unlabeled set.
    pub fn num_sets(&self) -> usize {
        self.a.len()
    }

    pub fn a(&self) -> &[f64] {
        &self.a
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn d(&self) -> f64 {
        self.d
    }

    /// `α = min(Σ ρ_j π_j (1−π_D), Σ ρ_j π_D (1−π_j))`, always positive.
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Evaluate every component at `eta`, returning a probability vector.
    ///
    /// Panics if `eta` is outside `[0, 1]`; callers produce `eta` from a
    /// sigmoid so the check is a programmer-error guard.
    pub fn apply(&self, eta: f64) -> Vec<f64> {
        let mut out = alloc::vec![0.0; self.num_sets()];
        self.apply_into(eta, &mut out);
        out
    }

    /// As [`apply`](Self::apply) but writing into a caller-provided buffer.
    pub fn apply_into(&self, eta: f64, out: &mut [f64]) {
        assert!(
            (0.0..=1.0).contains(&eta),
            "transition input {eta} outside [0, 1]"
        );
        assert_eq!(out.len(), self.num_sets());
        let denom = self.c * eta + self.d;
        for (o, (&a, &b)) in out.iter_mut().zip(self.a.iter().zip(&self.b)) {
            *o = (a * eta + b) / denom;
        }
    }

    /// Evaluate a single component at `eta`.
    pub fn component(&self, j: usize, eta: f64) -> f64 {
        (self.a[j] * eta + self.b[j]) / (self.c * eta + self.d)
    }

    /// Derivative of component `j` at `eta`: `(a_j d − b_j c) / (c·eta + d)²`.
    pub fn derivative(&self, j: usize, eta: f64) -> f64 {
        let denom = self.c * eta + self.d;
        (self.a[j] * self.d - self.b[j] * self.c) / (denom * denom)
    }

    /// Recover `eta` from the value of component `j`.
    ///
    /// Solves `T_j(eta) = etabar` as `eta = (d·etabar − b_j)/(a_j − c·etabar)`.
    /// Fails for a constant (degenerate) component, or when the recovered
    /// value falls outside `[0, 1]` beyond a small tolerance (the result is
    /// clamped within tolerance).
    pub fn invert(&self, j: usize, etabar: f64) -> Result<f64, TransitionError> {
        if self.is_degenerate(j) {
            return Err(TransitionError::DegenerateComponent(j));
        }
        let eta = (self.d * etabar - self.b[j]) / (self.a[j] - self.c * etabar);
        const SLACK: f64 = 1e-9;
        if !(-SLACK..=1.0 + SLACK).contains(&eta) || eta.is_nan() {
            return Err(TransitionError::InverseOutOfRange(eta));
        }
        Ok(eta.clamp(0.0, 1.0))
    }

    /// A component is degenerate (constant on `[0, 1]`) when `a_j d = b_j c`.
    pub fn is_degenerate(&self, j: usize) -> bool {
        self.a[j] * self.d - self.b[j] * self.c == 0.0
    }

    /// Upper bound `2/α²` on the slope of every component over `[0, 1]`.
    pub fn lipschitz_bound(&self) -> f64 {
        2.0 / (self.alpha * self.alpha)
    }

    /// Largest finite-difference slope of any component over a uniform grid
    /// of `points` samples of `[0, 1]`. Reported alongside the
    /// [`lipschitz_bound`](Self::lipschitz_bound), which it never exceeds.
    pub fn max_grid_slope(&self, points: usize) -> f64 {
        assert!(points >= 2);
        let h = 1.0 / (points - 1) as f64;
        let mut max_slope: f64 = 0.0;
        for j in 0..self.num_sets() {
            let mut prev = self.component(j, 0.0);
            for i in 1..points {
                let eta = i as f64 * h;
                let cur = self.component(j, eta);
                max_slope = max_slope.max(crate::math::fabs(cur - prev) / h);
                prev = cur;
            }
        }
        max_slope
    }

    /// Range of component `j` over `[0, 1]` as `(min, max)`.
    ///
    /// Each component is a monotone linear-fractional function with positive
    /// denominator, so its extrema sit at the endpoints `T_j(0) = b_j/d` and
    /// `T_j(1) = (a_j + b_j)/(c + d)`.
    pub fn output_range(&self, j: usize) -> (f64, f64) {
        let at0 = self.b[j] / self.d;
        let at1 = (self.a[j] + self.b[j]) / (self.c + self.d);
        if at0 <= at1 {
            (at0, at1)
        } else {
            (at1, at0)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(pis: &[f64], pi_d: f64) -> PriorSpec {
        PriorSpec::with_uniform_weights(pis.to_vec(), pi_d).unwrap()
    }

    #[test]
    fn coefficients_for_fully_separated_priors() {
        let co = spec(&[1.0, 0.0], 0.5).coefficients();
        assert_eq!(co.a(), &[0.25, -0.25]);
        assert_eq!(co.b(), &[0.0, 0.25]);
        assert_eq!(co.c(), 0.0);
        assert_eq!(co.d(), 0.25);
        assert_eq!(co.alpha(), 0.25);
    }

    #[test]
    fn coefficients_hand_evaluated() {
        let co = spec(&[0.9, 0.1], 0.5).coefficients();
        assert!((co.a()[0] - 0.2).abs() < SUM_TOLERANCE);
        assert!((co.a()[1] + 0.2).abs() < SUM_TOLERANCE);
        assert!((co.b()[0] - 0.025).abs() < SUM_TOLERANCE);
        assert!((co.b()[1] - 0.225).abs() < SUM_TOLERANCE);
        assert!(co.c().abs() < SUM_TOLERANCE);
        assert!((co.d() - 0.25).abs() < SUM_TOLERANCE);
        assert!((co.alpha() - 0.25).abs() < SUM_TOLERANCE);
    }

    #[test]
    fn alpha_takes_the_smaller_mixture_mass() {
        // Σρπ(1−π_D) = 0.15 < Σρπ_D(1−π) = 0.35.
        let co = spec(&[0.9, 0.1], 0.7).coefficients();
        assert!((co.alpha() - 0.15).abs() < SUM_TOLERANCE);
    }

    #[test]
    fn rejects_malformed_specs() {
        assert!(matches!(
            PriorSpec::with_uniform_weights(alloc::vec![0.5], 0.5),
            Err(TransitionError::TooFewSets(1))
        ));
        assert!(matches!(
            PriorSpec::with_uniform_weights(alloc::vec![0.4, 0.4, 0.4], 0.5),
            Err(TransitionError::IdenticalPriors(3))
        ));
        assert!(matches!(
            PriorSpec::with_uniform_weights(alloc::vec![1.2, 0.1], 0.5),
            Err(TransitionError::PriorOutOfRange { index: 0, .. })
        ));
        assert!(matches!(
            PriorSpec::with_uniform_weights(alloc::vec![0.9, 0.1], 1.0),
            Err(TransitionError::TestPriorOutOfRange(_))
        ));
        assert!(matches!(
            PriorSpec::new(alloc::vec![0.9, 0.1], alloc::vec![0.9, -0.1], 0.5),
            Err(TransitionError::WeightNotPositive { index: 1, .. })
        ));
        assert!(matches!(
            PriorSpec::new(alloc::vec![0.9, 0.1], alloc::vec![0.6, 0.6], 0.5),
            Err(TransitionError::WeightsNotNormalized(_))
        ));
    }

    #[test]
    fn apply_reduces_to_identity_for_separated_priors() {
        let co = spec(&[1.0, 0.0], 0.5).coefficients();
        let g = co.apply(0.3);
        assert!((g[0] - 0.3).abs() < SUM_TOLERANCE);
        assert!((g[1] - 0.7).abs() < SUM_TOLERANCE);
    }

    #[test]
    fn apply_hand_evaluated_midpoint() {
        let co = spec(&[0.9, 0.1], 0.5).coefficients();
        let g = co.apply(0.5);
        assert!((g[0] - 0.5).abs() < SUM_TOLERANCE);
        assert!((g[1] - 0.5).abs() < SUM_TOLERANCE);
    }

    #[test]
    fn apply_at_zero_gives_b_over_d() {
        let co = spec(&[0.8, 0.3, 0.5], 0.6).coefficients();
        let g = co.apply(0.0);
        for j in 0..3 {
            assert!((g[j] - co.b()[j] / co.d()).abs() < SUM_TOLERANCE);
        }
    }

    #[test]
    fn invert_round_trips_hand_example() {
        let co = spec(&[0.9, 0.1], 0.5).coefficients();
        let eta = co.invert(0, 0.5).unwrap();
        assert!((eta - 0.5).abs() < 1e-12);
    }

    #[test]
    fn invert_separated_component() {
        let co = spec(&[1.0, 0.0], 0.5).coefficients();
        // T_2 = 1 − η, so invert(1, 1) = 0.
        assert!((co.invert(1, 1.0).unwrap() - 0.0).abs() < 1e-12);
    }

    #[test]
    fn invert_rejects_degenerate_component() {
        // π_j = (c + π_D d)/(c + d) makes component j constant. With priors
        // (0.9, pi_star, 0.1) and uniform weights, solve for pi_star = π_D
        // such that a_j d = b_j c: choosing π_D so that c = 0 means the
        // degenerate prior equals π_D itself.
        // priors (0.9, 0.5, 0.1), π_D = 0.5: c = Σρ(π−0.5) = 0 and the middle
        // component has a_j = 0, hence constant.
        let co = spec(&[0.9, 0.5, 0.1], 0.5).coefficients();
        assert!(co.is_degenerate(1));
        assert!(matches!(
            co.invert(1, co.component(1, 0.3)),
            Err(TransitionError::DegenerateComponent(1))
        ));
        // A non-degenerate component still inverts.
        let eta = co.invert(0, co.component(0, 0.3)).unwrap();
        assert!((eta - 0.3).abs() < 1e-10);
    }

    #[test]
    fn invert_rejects_out_of_range() {
        let co = spec(&[0.9, 0.1], 0.5).coefficients();
        // T_1 ranges over [0.1, 0.9]; a value far outside cannot come from
        // any η in [0, 1].
        assert!(matches!(
            co.invert(0, 0.99),
            Err(TransitionError::InverseOutOfRange(_))
        ));
    }

    #[test]
    fn lipschitz_bound_values() {
        let co = spec(&[0.9, 0.1], 0.5).coefficients();
        assert!((co.lipschitz_bound() - 32.0).abs() < 1e-12);
        let co = spec(&[0.9, 0.1], 0.7).coefficients();
        assert!((co.lipschitz_bound() - 2.0 / (0.15 * 0.15)).abs() < 1e-9);
        assert!((co.lipschitz_bound() - 88.888_888_888_888_9).abs() < 1e-9);
    }

    #[test]
    fn lipschitz_bound_exceeds_two() {
        // α ≤ min(π_D, 1−π_D) < 1, so 2/α² > 2 for every valid spec.
        for &(pis, pi_d) in &[
            (&[0.9_f64, 0.1][..], 0.5),
            (&[1.0, 0.0][..], 0.5),
            (&[0.3, 0.6, 0.9][..], 0.2),
        ] {
            let co = spec(pis, pi_d).coefficients();
            assert!(co.lipschitz_bound() > 2.0);
        }
    }

    #[test]
    fn grid_slope_never_exceeds_bound() {
        let co = spec(&[0.9, 0.2, 0.5, 0.35], 0.6).coefficients();
        assert!(co.max_grid_slope(10_000) <= co.lipschitz_bound() + 1e-9);
    }

    #[test]
    fn output_range_examples() {
        let co = spec(&[1.0, 0.0], 0.5).coefficients();
        let (lo, hi) = co.output_range(0);
        assert!((lo - 0.0).abs() < SUM_TOLERANCE && (hi - 1.0).abs() < SUM_TOLERANCE);

        let co = spec(&[0.9, 0.1], 0.5).coefficients();
        let (lo, hi) = co.output_range(0);
        assert!((lo - 0.1).abs() < SUM_TOLERANCE);
        assert!((hi - 0.9).abs() < SUM_TOLERANCE);
    }

    #[test]
    fn coefficient_sums_match_c_and_d() {
        let co = spec(&[0.15, 0.8, 0.4, 0.62, 0.3], 0.37).coefficients();
        let sa: f64 = co.a().iter().sum();
        let sb: f64 = co.b().iter().sum();
        assert!((sa - co.c()).abs() < SUM_TOLERANCE);
        assert!((sb - co.d()).abs() < SUM_TOLERANCE);
    }
}
