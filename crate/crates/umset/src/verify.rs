//! Self-contained verification suites: brute-force oracles checked against
//! the library's closed-form paths, reported with measured values and
//! tolerances. The CLI `verify` subcommand runs all of them; the acceptance
//! tests call them individually.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use umset_core::baselines::{binary_loss, U2Coefficients};
use umset_core::model::{surrogate_loss_and_slope, Gradients, Network};
use umset_core::transition::PriorSpec;

/// One property's outcome. `measured` is the worst observed value in the
/// suite; the property passes while it stays on the right side of
/// `tolerance`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PropertyReport {
    pub name: String,
    pub pass: bool,
    pub measured: f64,
    pub tolerance: f64,
    pub details: String,
}

impl PropertyReport {
    /// Stable digest of the outcome, for reproducibility checks.
    pub fn digest(&self) -> u64 {
        self.measured.to_bits() ^ ((self.pass as u64) << 63)
    }
}

/// Random valid spec: `m` sets, priors spread over `[0.05, 0.95]`, random
/// positive weights, interior test prior.
fn random_spec<R: Rng>(rng: &mut R, m: usize) -> PriorSpec {
    loop {
        let pis: Vec<f64> = (0..m).map(|_| rng.gen_range(0.05..0.95)).collect();
        let lo = pis.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = pis.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if hi - lo < 1e-3 {
            continue;
        }
        let raw: Vec<f64> = (0..m).map(|_| rng.gen_range(0.1..1.0)).collect();
        let total: f64 = raw.iter().sum();
        let mut rhos: Vec<f64> = raw.iter().map(|r| r / total).collect();
        let head: f64 = rhos[..m - 1].iter().sum();
        rhos[m - 1] = 1.0 - head;
        let pi_d = rng.gen_range(0.1..0.9);
        if let Ok(spec) = PriorSpec::new(pis, rhos, pi_d) {
            return spec;
        }
    }
}

/// Surrogate posteriors by direct Bayes rule against the transition map on
/// random finite discrete domains.
///
/// `mutate` corrupts the first mapped component by a relative 1e-3 so the
/// check demonstrably catches broken coefficients.
pub fn theorem1_equivalence(domains: usize, mutate: bool) -> PropertyReport {
    let mut rng = ChaCha8Rng::seed_from_u64(0x7e01);
    let tolerance = 1e-10;
    let mut max_err: f64 = 0.0;
    for _ in 0..domains {
        let m = rng.gen_range(2..=6);
        let spec = random_spec(&mut rng, m);
        let points = rng.gen_range(2..=8);
        let mut pp: Vec<f64> = (0..points).map(|_| rng.gen_range(0.05..1.0)).collect();
        let mut pn: Vec<f64> = (0..points).map(|_| rng.gen_range(0.05..1.0)).collect();
        let (sp, sn) = (pp.iter().sum::<f64>(), pn.iter().sum::<f64>());
        pp.iter_mut().for_each(|v| *v /= sp);
        pn.iter_mut().for_each(|v| *v /= sn);

        let coeffs = spec.coefficients();
        for (pp_x, pn_x) in pp.iter().zip(&pn) {
            let pi_d = spec.pi_d();
            let eta = pi_d * pp_x / (pi_d * pp_x + (1.0 - pi_d) * pn_x);
            let mut mapped = coeffs.apply(eta);
            if mutate {
                mapped[0] *= 1.0 + 1e-3;
            }
            let masses: Vec<f64> = spec
                .pis()
                .iter()
                .zip(spec.rhos())
                .map(|(&pi, &rho)| rho * (pi * pp_x + (1.0 - pi) * pn_x))
                .collect();
            let marginal: f64 = masses.iter().sum();
            for (j, &mass) in masses.iter().enumerate() {
                max_err = max_err.max((mass / marginal - mapped[j]).abs());
            }
        }
    }
    PropertyReport {
        name: "theorem1_posterior_equivalence".into(),
        pass: max_err < tolerance,
        measured: max_err,
        tolerance,
        details: format!("{domains} random discrete domains, mutate={mutate}"),
    }
}

/// No two inputs separated by more than 1e-6 map to the same surrogate
/// vector.
pub fn lemma1_injectivity(specs: usize, pairs_per_spec: usize) -> PropertyReport {
    let mut rng = ChaCha8Rng::seed_from_u64(0x7e02);
    let mut min_gap = f64::INFINITY;
    for _ in 0..specs {
        let m = rng.gen_range(2..=6);
        let coeffs = random_spec(&mut rng, m).coefficients();
        for _ in 0..pairs_per_spec {
            let t1: f64 = rng.gen();
            let mut t2: f64 = rng.gen();
            while (t1 - t2).abs() <= 1e-6 {
                t2 = rng.gen();
            }
            let (g1, g2) = (coeffs.apply(t1), coeffs.apply(t2));
            let gap = g1
                .iter()
                .zip(&g2)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0f64, f64::max);
            min_gap = min_gap.min(gap);
        }
    }
    PropertyReport {
        name: "lemma1_injectivity".into(),
        pass: min_gap > 0.0,
        measured: min_gap,
        tolerance: 0.0,
        details: format!("{specs} specs x {pairs_per_spec} input pairs; measured = smallest max-component gap"),
    }
}

/// Finite-difference slopes on a dense grid never exceed the closed-form
/// bound `2/α²`. The measured value is the worst slope/bound ratio; the
/// details carry the largest observed slope for reporting alongside the
/// bound.
pub fn lemma4_lipschitz(specs: usize, grid: usize) -> PropertyReport {
    let mut rng = ChaCha8Rng::seed_from_u64(0x7e03);
    let mut worst_ratio: f64 = 0.0;
    let mut max_slope: f64 = 0.0;
    let mut max_bound: f64 = 0.0;
    for _ in 0..specs {
        let m = rng.gen_range(2..=6);
        let coeffs = random_spec(&mut rng, m).coefficients();
        let slope = coeffs.max_grid_slope(grid);
        let bound = coeffs.lipschitz_bound();
        worst_ratio = worst_ratio.max(slope / (bound + 1e-9));
        max_slope = max_slope.max(slope);
        max_bound = max_bound.max(bound);
    }
    PropertyReport {
        name: "lemma4_lipschitz_bound".into(),
        pass: worst_ratio <= 1.0,
        measured: worst_ratio,
        tolerance: 1.0,
        details: format!(
            "{specs} specs, {grid}-point grids; max slope {max_slope:.3}, max bound {max_bound:.3}"
        ),
    }
}

/// Component ranges: the endpoint formulas `b_j/d` and `(a_j+b_j)/(c+d)`
/// match direct evaluation, and for 50 uniform-weight sets with priors in
/// [0.1, 0.9] the largest endpoint lands in [0.01, 0.1].
pub fn output_range_check() -> PropertyReport {
    let mut rng = ChaCha8Rng::seed_from_u64(0x7e04);
    let tolerance = 1e-12;
    let mut max_err: f64 = 0.0;
    for _ in 0..200 {
        let m = rng.gen_range(2..=6);
        let coeffs = random_spec(&mut rng, m).coefficients();
        let at0 = coeffs.apply(0.0);
        let at1 = coeffs.apply(1.0);
        for j in 0..m {
            let expected0 = coeffs.b()[j] / coeffs.d();
            let expected1 = (coeffs.a()[j] + coeffs.b()[j]) / (coeffs.c() + coeffs.d());
            max_err = max_err.max((at0[j] - expected0).abs());
            max_err = max_err.max((at1[j] - expected1).abs());
            let (lo, hi) = coeffs.output_range(j);
            max_err = max_err.max((lo - expected0.min(expected1)).abs());
            max_err = max_err.max((hi - expected0.max(expected1)).abs());
        }
    }

    // Paper-scale configuration: 50 sets, uniform weights.
    let mut in_band = true;
    let mut extremes = (f64::INFINITY, 0.0f64);
    for _ in 0..20 {
        let pis: Vec<f64> = (0..50).map(|_| rng.gen_range(0.1..0.9)).collect();
        let coeffs = PriorSpec::with_uniform_weights(pis, 0.5)
            .expect("valid spec")
            .coefficients();
        let top = (0..50)
            .map(|j| coeffs.output_range(j).1)
            .fold(0.0f64, f64::max);
        extremes = (extremes.0.min(top), extremes.1.max(top));
        in_band &= (0.01..=0.1).contains(&top);
    }

    PropertyReport {
        name: "output_range_endpoints".into(),
        pass: max_err < tolerance && in_band,
        measured: max_err,
        tolerance,
        details: format!(
            "endpoint formulas on 200 specs; m=50 max endpoints in [{:.4}, {:.4}] (expect within [0.01, 0.1])",
            extremes.0, extremes.1
        ),
    }
}

/// Analytic gradients of the surrogate loss against central finite
/// differences on random small networks.
pub fn gradient_check(triples: usize) -> PropertyReport {
    let mut rng = ChaCha8Rng::seed_from_u64(0x7e05);
    let tolerance = 1e-4;
    let mut worst_rel: f64 = 0.0;
    for _ in 0..triples {
        let m = rng.gen_range(2..=5);
        let spec = random_spec(&mut rng, m);
        let coeffs = spec.coefficients();
        let dim = rng.gen_range(2..=4);
        let hidden = rng.gen_range(3..=6);
        let mut net = Network::new(&[dim, hidden, 1], &mut rng);
        let batch = rng.gen_range(3..=6);
        let xs_owned: Vec<Vec<f64>> = (0..batch)
            .map(|_| (0..dim).map(|_| rng.gen_range(-2.0..2.0)).collect())
            .collect();
        let xs: Vec<&[f64]> = xs_owned.iter().map(|v| v.as_slice()).collect();
        let ybars: Vec<usize> = (0..batch).map(|_| rng.gen_range(0..m)).collect();

        let mut grads = Gradients::for_network(&net);
        let mut traces = Vec::new();
        umset_core::model::surrogate_batch_gradient(
            &net, &coeffs, &xs, &ybars, &mut traces, &mut grads,
        );

        let loss_at = |net: &Network| -> f64 {
            xs.iter()
                .zip(&ybars)
                .map(|(&x, &y)| surrogate_loss_and_slope(&coeffs, net.score(x), y).0)
                .sum::<f64>()
                / xs.len() as f64
        };
        let h = 1e-5;
        for l in 0..net.num_layers() {
            for i in 0..net.weights()[l].len() {
                let orig = net.weights()[l][i];
                net.weights_mut()[l][i] = orig + h;
                let up = loss_at(&net);
                net.weights_mut()[l][i] = orig - h;
                let down = loss_at(&net);
                net.weights_mut()[l][i] = orig;
                let numeric = (up - down) / (2.0 * h);
                if numeric.abs() > 1e-6 {
                    let rel = ((grads.w()[l][i] - numeric) / numeric).abs();
                    worst_rel = worst_rel.max(rel);
                }
            }
            for i in 0..net.biases()[l].len() {
                let orig = net.biases()[l][i];
                net.biases_mut()[l][i] = orig + h;
                let up = loss_at(&net);
                net.biases_mut()[l][i] = orig - h;
                let down = loss_at(&net);
                net.biases_mut()[l][i] = orig;
                let numeric = (up - down) / (2.0 * h);
                if numeric.abs() > 1e-6 {
                    let rel = ((grads.b()[l][i] - numeric) / numeric).abs();
                    worst_rel = worst_rel.max(rel);
                }
            }
        }
    }
    PropertyReport {
        name: "gradient_central_differences".into(),
        pass: worst_rel < tolerance,
        measured: worst_rel,
        tolerance,
        details: format!("{triples} random (network, coefficients, batch) triples"),
    }
}

/// Exact-enumeration expectation of the pairwise unbiased risk equals the
/// supervised risk on a four-point domain; the balanced variant at
/// π_D = 0.8 shows its bias.
pub fn unbiasedness_enumeration(scorers: usize) -> PropertyReport {
    let mut rng = ChaCha8Rng::seed_from_u64(0x7e06);
    let tolerance = 1e-10;
    let (pi1, pi2, pi_d) = (0.85, 0.25, 0.8);
    let unbiased = U2Coefficients::new(pi1, pi2, pi_d).expect("valid pair");
    let balanced = U2Coefficients::balanced(pi1, pi2).expect("valid pair");
    let mut max_dev: f64 = 0.0;
    let mut max_balanced_gap: f64 = 0.0;
    for _ in 0..scorers {
        let mut pp: Vec<f64> = (0..4).map(|_| rng.gen_range(0.05..1.0)).collect();
        let mut pn: Vec<f64> = (0..4).map(|_| rng.gen_range(0.05..1.0)).collect();
        let (sp, sn) = (pp.iter().sum::<f64>(), pn.iter().sum::<f64>());
        pp.iter_mut().for_each(|v| *v /= sp);
        pn.iter_mut().for_each(|v| *v /= sn);
        let scores: Vec<f64> = (0..4).map(|_| rng.gen_range(0.02..0.98)).collect();

        // Expected per-set mean loss is a finite sum over the domain.
        let set_mean = |pi: f64, y: i8| -> f64 {
            (0..4)
                .map(|i| (pi * pp[i] + (1.0 - pi) * pn[i]) * binary_loss(scores[i], y))
                .sum()
        };
        let expect = |co: &U2Coefficients| -> f64 {
            co.c1p * set_mean(pi1, 1) - co.c2p * set_mean(pi2, 1) - co.c1n * set_mean(pi1, -1)
                + co.c2n * set_mean(pi2, -1)
        };
        let supervised: f64 = (0..4)
            .map(|i| {
                pi_d * pp[i] * binary_loss(scores[i], 1)
                    + (1.0 - pi_d) * pn[i] * binary_loss(scores[i], -1)
            })
            .sum();
        max_dev = max_dev.max((expect(&unbiased) - supervised).abs());
        max_balanced_gap = max_balanced_gap.max((expect(&balanced) - supervised).abs());
    }
    let witness = max_balanced_gap > 1e-3;
    PropertyReport {
        name: "u2_unbiasedness_enumeration".into(),
        pass: max_dev < tolerance && witness,
        measured: max_dev,
        tolerance,
        details: format!(
            "{scorers} fixed scorers on 4-point domains; balanced-risk bias witness {max_balanced_gap:.4e} (> 1e-3 required)"
        ),
    }
}

/// Run every suite at its standard size.
pub fn run_all(mutate: bool) -> Vec<PropertyReport> {
    vec![
        theorem1_equivalence(120, mutate),
        lemma1_injectivity(1000, 100),
        lemma4_lipschitz(1000, 10_000),
        output_range_check(),
        gradient_check(50),
        unbiasedness_enumeration(20),
    ]
}
