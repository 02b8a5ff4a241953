//! Binary classification from multiple unlabeled datasets with known class priors.
//!
//! Given `m >= 2` unlabeled sets, each drawn from a different mixture of the
//! positive and negative class-conditional densities, the only supervision is
//! the per-set class prior. The central route here treats the set index as a
//! surrogate label: a scorer `f(x) ∈ [0, 1]` feeds a fixed linear-fractional
//! transition layer whose outputs estimate the surrogate set posteriors, and
//! minimizing the surrogate cross-entropy drives `f` toward the binary
//! class posterior. See [`transition`] for the map and its properties,
//! [`model`] for the scorer, and [`harness`] for the training loop.
//!
//! Pairwise risk estimators (unbiased, balanced, non-negative-corrected) and
//! the empirical proportion risk are provided in [`baselines`] for
//! comparison; [`datagen`] builds synthetic problem instances with
//! analytically known posteriors.
//!
//! The crate is `no_std` (with `alloc`) and fully deterministic: every
//! randomized operation takes an explicit seeded generator.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod baselines;
pub mod datagen;
pub mod harness;
mod math;
pub mod model;
pub mod transition;

pub use baselines::{PairingPlan, RiskParts, Scorer, U2Coefficients};
pub use datagen::{FeatureMatrix, LabeledPool, SizeMode, USetCollection};
pub use harness::{EpochMetrics, Method, TrainSettings, TrialRecord};
pub use model::{AdamState, ForwardTrace, Gradients, Network};
pub use transition::{PriorSpec, TransitionCoefficients};
