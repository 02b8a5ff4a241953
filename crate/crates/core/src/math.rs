//! Float helpers routed through `libm` so the crate builds without `std`.

pub(crate) use libm::{cos, exp, fabs, log as ln, round, sqrt};

use core::f64::consts::SQRT_2;

/// Standard normal cumulative distribution function.
pub(crate) fn normal_cdf(x: f64) -> f64 {
    0.5 * (1.0 + libm::erf(x / SQRT_2))
}

/// Numerically stable logistic sigmoid.
pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + exp(-z))
    } else {
        let e = exp(z);
        e / (1.0 + e)
    }
}

/// Inverse of the sigmoid. Requires `p` in (0, 1).
pub(crate) fn logit(p: f64) -> f64 {
    ln(p / (1.0 - p))
}
