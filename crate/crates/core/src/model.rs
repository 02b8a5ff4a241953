//! The trainable scorer: a ReLU feed-forward network with a sigmoid head
//! producing `f(x) ∈ (0, 1)`, the fixed transition layer `g(x) = T(f(x))`
//! stacked on top for training, exact reverse-mode gradients, and Adam.
//!
//! The transition layer holds no learnable parameters; only the base
//! network's weights move during optimization.

use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::math;
use crate::transition::TransitionCoefficients;

/// Lower clamp applied to the surrogate probability inside the log. The true
/// attainable floor of any component is strictly positive, so the clamp only
/// guards saturated arithmetic.
pub const SURROGATE_CLAMP: f64 = 1e-12;

/// Feed-forward network: widths `[d_in, hidden…, 1]`, ReLU on hidden layers,
/// sigmoid on the single output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    widths: Vec<usize>,
    /// Per layer, row-major `out × in`.
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
}

impl Network {
    /// Fan-in scaled uniform initialization `U(−1/√fan_in, 1/√fan_in)`,
    /// biases zero.
    pub fn new<R: Rng>(widths: &[usize], rng: &mut R) -> Self {
        assert!(widths.len() >= 2, "need at least input and output widths");
        assert_eq!(*widths.last().unwrap(), 1, "output width must be 1");
        assert!(widths.iter().all(|&w| w >= 1));
        let mut weights = Vec::with_capacity(widths.len() - 1);
        let mut biases = Vec::with_capacity(widths.len() - 1);
        for l in 0..widths.len() - 1 {
            let (fan_in, fan_out) = (widths[l], widths[l + 1]);
            let limit = 1.0 / math::sqrt(fan_in as f64);
            let w = (0..fan_in * fan_out)
                .map(|_| rng.gen_range(-limit..limit))
                .collect();
            weights.push(w);
            biases.push(alloc::vec![0.0; fan_out]);
        }
        Self {
            widths: widths.to_vec(),
            weights,
            biases,
        }
    }

    /// All-zero parameters (useful as a fixed point: `f ≡ 0.5`).
    pub fn zeroed(widths: &[usize]) -> Self {
        assert!(widths.len() >= 2);
        assert_eq!(*widths.last().unwrap(), 1);
        let weights = (0..widths.len() - 1)
            .map(|l| alloc::vec![0.0; widths[l] * widths[l + 1]])
            .collect();
        let biases = (0..widths.len() - 1)
            .map(|l| alloc::vec![0.0; widths[l + 1]])
            .collect();
        Self {
            widths: widths.to_vec(),
            weights,
            biases,
        }
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn num_layers(&self) -> usize {
        self.widths.len() - 1
    }

    pub fn weights(&self) -> &[Vec<f64>] {
        &self.weights
    }

    pub fn biases(&self) -> &[Vec<f64>] {
        &self.biases
    }

    pub fn weights_mut(&mut self) -> &mut [Vec<f64>] {
        &mut self.weights
    }

    pub fn biases_mut(&mut self) -> &mut [Vec<f64>] {
        &mut self.biases
    }

    /// Total parameter count.
    pub fn num_params(&self) -> usize {
        self.weights.iter().map(Vec::len).sum::<usize>()
            + self.biases.iter().map(Vec::len).sum::<usize>()
    }

    /// Forward pass recording pre-activations and activations.
    pub fn forward(&self, x: &[f64]) -> ForwardTrace {
        let mut trace = ForwardTrace::for_network(self);
        self.forward_into(x, &mut trace);
        trace
    }

    /// As [`forward`](Self::forward), reusing an existing trace.
    pub fn forward_into(&self, x: &[f64], trace: &mut ForwardTrace) {
        assert_eq!(x.len(), self.input_dim(), "input width mismatch");
        let layers = self.num_layers();
        for l in 0..layers {
            let fan_in = self.widths[l];
            let fan_out = self.widths[l + 1];
            let (done, rest) = trace.act.split_at_mut(l);
            let input: &[f64] = if l == 0 { x } else { &done[l - 1] };
            let cur_act = &mut rest[0];
            let cur_pre = &mut trace.pre[l];
            let w = &self.weights[l];
            let b = &self.biases[l];
            for o in 0..fan_out {
                let mut z = b[o];
                for (wi, xi) in w[o * fan_in..(o + 1) * fan_in].iter().zip(input) {
                    z += wi * xi;
                }
                cur_pre[o] = z;
                cur_act[o] = if l + 1 == layers {
                    math::sigmoid(z)
                } else {
                    z.max(0.0)
                };
            }
        }
        trace.surrogate.clear();
    }

    /// Forward pass followed by the fixed transition layer.
    pub fn surrogate_forward(&self, coeffs: &TransitionCoefficients, x: &[f64]) -> ForwardTrace {
        let mut trace = self.forward(x);
        trace
            .surrogate
            .resize(coeffs.num_sets(), 0.0);
        let f = trace.score();
        coeffs.apply_into(f, &mut trace.surrogate);
        trace
    }

    /// Score only, without recording a trace.
    pub fn score(&self, x: &[f64]) -> f64 {
        assert_eq!(x.len(), self.input_dim(), "input width mismatch");
        let layers = self.num_layers();
        let max_width = *self.widths.iter().max().unwrap();
        let mut cur = Vec::with_capacity(max_width);
        let mut next = Vec::with_capacity(max_width);
        cur.extend_from_slice(x);
        for l in 0..layers {
            let fan_in = self.widths[l];
            let fan_out = self.widths[l + 1];
            next.clear();
            let w = &self.weights[l];
            for o in 0..fan_out {
                let mut z = self.biases[l][o];
                for (wi, xi) in w[o * fan_in..(o + 1) * fan_in].iter().zip(&cur) {
                    z += wi * xi;
                }
                next.push(if l + 1 == layers {
                    math::sigmoid(z)
                } else {
                    z.max(0.0)
                });
            }
            core::mem::swap(&mut cur, &mut next);
        }
        cur[0]
    }

    /// Binary prediction with threshold ½; ties go to `+1`.
    pub fn predict(&self, x: &[f64]) -> i8 {
        if self.score(x) >= 0.5 {
            1
        } else {
            -1
        }
    }

    /// Accumulate gradients of `upstream · f(x)` (with `upstream = ∂L/∂f`)
    /// into `grads`. The trace must come from a forward pass on `x`.
    pub fn backward_into(
        &self,
        x: &[f64],
        trace: &ForwardTrace,
        upstream: f64,
        grads: &mut Gradients,
    ) {
        let layers = self.num_layers();
        let f = trace.score();
        grads.delta.clear();
        grads.delta.push(upstream * f * (1.0 - f));
        for l in (0..layers).rev() {
            let fan_in = self.widths[l];
            let fan_out = self.widths[l + 1];
            let input: &[f64] = if l == 0 { x } else { &trace.act[l - 1] };
            let w = &self.weights[l];
            let gw = &mut grads.w[l];
            let gb = &mut grads.b[l];
            for o in 0..fan_out {
                let d = grads.delta[o];
                gb[o] += d;
                for (gwi, xi) in gw[o * fan_in..(o + 1) * fan_in].iter_mut().zip(input) {
                    *gwi += d * xi;
                }
            }
            if l > 0 {
                grads.delta_next.clear();
                grads.delta_next.resize(fan_in, 0.0);
                for o in 0..fan_out {
                    let d = grads.delta[o];
                    for (dn, wi) in grads
                        .delta_next
                        .iter_mut()
                        .zip(&w[o * fan_in..(o + 1) * fan_in])
                    {
                        *dn += d * wi;
                    }
                }
                for (dn, &z) in grads.delta_next.iter_mut().zip(&trace.pre[l - 1]) {
                    if z <= 0.0 {
                        *dn = 0.0;
                    }
                }
                core::mem::swap(&mut grads.delta, &mut grads.delta_next);
            }
        }
    }
}

/// Recorded forward pass: per-layer pre-activations and activations, plus
/// the surrogate vector when the transition layer was applied.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pre: Vec<Vec<f64>>,
    act: Vec<Vec<f64>>,
    surrogate: Vec<f64>,
}

impl ForwardTrace {
    pub fn for_network(net: &Network) -> Self {
        let pre = (1..net.widths.len())
            .map(|l| alloc::vec![0.0; net.widths[l]])
            .collect();
        let act = (1..net.widths.len())
            .map(|l| alloc::vec![0.0; net.widths[l]])
            .collect();
        Self {
            pre,
            act,
            surrogate: Vec::new(),
        }
    }

    /// Final sigmoid output `f(x)`.
    pub fn score(&self) -> f64 {
        self.act.last().unwrap()[0]
    }

    /// Surrogate vector `g(x) = T(f(x))`; empty unless the transition layer
    /// was applied.
    pub fn surrogate(&self) -> &[f64] {
        &self.surrogate
    }

    pub fn activations(&self) -> &[Vec<f64>] {
        &self.act
    }

    pub fn pre_activations(&self) -> &[Vec<f64>] {
        &self.pre
    }
}

/// Cross-entropy against the surrogate label: `−log g_ȳ(x)`.
///
/// The probability is clamped below at [`SURROGATE_CLAMP`], so the result is
/// finite (at most `−ln(1e-12) ≈ 27.6`).
pub fn surrogate_loss(trace: &ForwardTrace, ybar: usize) -> f64 {
    let g = trace.surrogate[ybar];
    nll(g)
}

fn nll(g: f64) -> f64 {
    if g < 1e-300 {
        log::warn!("surrogate probability underflow ({g:e}); clamping");
    }
    -math::ln(g.max(SURROGATE_CLAMP))
}

/// Loss and its derivative w.r.t. the score for one example:
/// `ℓ = −log T_ȳ(f)` and `∂ℓ/∂f = −T'_ȳ(f) / T_ȳ(f)`.
pub fn surrogate_loss_and_slope(
    coeffs: &TransitionCoefficients,
    f: f64,
    ybar: usize,
) -> (f64, f64) {
    let g = coeffs.component(ybar, f).max(SURROGATE_CLAMP);
    let loss = -math::ln(g);
    let slope = -coeffs.derivative(ybar, f) / g;
    (loss, slope)
}

/// Gradient accumulator shaped like a [`Network`], plus backprop scratch.
#[derive(Debug, Clone)]
pub struct Gradients {
    w: Vec<Vec<f64>>,
    b: Vec<Vec<f64>>,
    delta: Vec<f64>,
    delta_next: Vec<f64>,
}

impl Gradients {
    pub fn for_network(net: &Network) -> Self {
        Self {
            w: net.weights.iter().map(|w| alloc::vec![0.0; w.len()]).collect(),
            b: net.biases.iter().map(|b| alloc::vec![0.0; b.len()]).collect(),
            delta: Vec::new(),
            delta_next: Vec::new(),
        }
    }

    pub fn zero(&mut self) {
        for w in &mut self.w {
            w.fill(0.0);
        }
        for b in &mut self.b {
            b.fill(0.0);
        }
    }

    pub fn w(&self) -> &[Vec<f64>] {
        &self.w
    }

    pub fn b(&self) -> &[Vec<f64>] {
        &self.b
    }

    /// Add `coefficient · weights` (weights only, not biases) — the usual
    /// L2 penalty gradient.
    pub fn add_weight_decay(&mut self, net: &Network, coefficient: f64) {
        if coefficient == 0.0 {
            return;
        }
        for (gw, w) in self.w.iter_mut().zip(&net.weights) {
            for (g, p) in gw.iter_mut().zip(w) {
                *g += coefficient * p;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.w.iter().flatten().all(|g| g.is_finite())
            && self.b.iter().flatten().all(|g| g.is_finite())
    }
}

/// Mean surrogate cross-entropy over a batch and its exact gradient.
///
/// `traces` is reused across calls; it grows to the batch size on demand.
/// Returns the mean loss (the per-batch training objective).
pub fn surrogate_batch_gradient(
    net: &Network,
    coeffs: &TransitionCoefficients,
    xs: &[&[f64]],
    ybars: &[usize],
    traces: &mut Vec<ForwardTrace>,
    grads: &mut Gradients,
) -> f64 {
    assert_eq!(xs.len(), ybars.len());
    assert!(!xs.is_empty(), "empty batch");
    while traces.len() < xs.len() {
        traces.push(ForwardTrace::for_network(net));
    }
    let n = xs.len() as f64;
    let mut total = 0.0;
    for ((&x, &ybar), trace) in xs.iter().zip(ybars).zip(traces.iter_mut()) {
        net.forward_into(x, trace);
        let (loss, slope) = surrogate_loss_and_slope(coeffs, trace.score(), ybar);
        total += loss;
        net.backward_into(x, trace, slope / n, grads);
    }
    total / n
}

/// Adam optimizer state with bias correction and the epoch-indexed learning
/// rate schedule `base / (1 + decay · epoch)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdamState {
    m_w: Vec<Vec<f64>>,
    v_w: Vec<Vec<f64>>,
    m_b: Vec<Vec<f64>>,
    v_b: Vec<Vec<f64>>,
    step_count: u64,
    base_lr: f64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
    decay: f64,
}

impl AdamState {
    pub fn new(net: &Network, base_lr: f64, decay: f64) -> Self {
        let zeros_w: Vec<Vec<f64>> = net.weights.iter().map(|w| alloc::vec![0.0; w.len()]).collect();
        let zeros_b: Vec<Vec<f64>> = net.biases.iter().map(|b| alloc::vec![0.0; b.len()]).collect();
        Self {
            m_w: zeros_w.clone(),
            v_w: zeros_w,
            m_b: zeros_b.clone(),
            v_b: zeros_b,
            step_count: 0,
            base_lr,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            decay,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    /// Learning rate applied during `epoch` (0-based).
    pub fn effective_lr(&self, epoch: usize) -> f64 {
        self.base_lr / (1.0 + self.decay * epoch as f64)
    }

    /// One Adam update from accumulated gradients.
    pub fn step(&mut self, net: &mut Network, grads: &Gradients, epoch: usize) {
        self.step_count += 1;
        let lr = self.effective_lr(epoch);
        let bc1 = 1.0 - libm::pow(self.beta1, self.step_count as f64);
        let bc2 = 1.0 - libm::pow(self.beta2, self.step_count as f64);
        for l in 0..net.weights.len() {
            update_group(
                &mut net.weights[l],
                &grads.w[l],
                &mut self.m_w[l],
                &mut self.v_w[l],
                lr,
                self.beta1,
                self.beta2,
                self.epsilon,
                bc1,
                bc2,
            );
            update_group(
                &mut net.biases[l],
                &grads.b[l],
                &mut self.m_b[l],
                &mut self.v_b[l],
                lr,
                self.beta1,
                self.beta2,
                self.epsilon,
                bc1,
                bc2,
            );
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn update_group(
    params: &mut [f64],
    grads: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    lr: f64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
    bc1: f64,
    bc2: f64,
) {
    for i in 0..params.len() {
        let g = grads[i];
        m[i] = beta1 * m[i] + (1.0 - beta1) * g;
        v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
        let m_hat = m[i] / bc1;
        let v_hat = v[i] / bc2;
        params[i] -= lr * m_hat / (math::sqrt(v_hat) + epsilon);
    }
}
