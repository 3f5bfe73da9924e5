//! Standard normal density, distribution function and interval masses.
//!
//! The distribution function is evaluated through `erfc` on whichever tail
//! keeps the argument non-negative, so small probabilities far in either
//! tail keep full relative precision.

use libm::erfc;
use std::f64::consts::{FRAC_1_SQRT_2, PI};

/// Standard normal density.
pub fn pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * PI).sqrt()
}

/// Standard normal distribution function Φ(z).
pub fn cdf(z: f64) -> f64 {
    0.5 * erfc(-z * FRAC_1_SQRT_2)
}

/// Upper tail 1 − Φ(z).
pub fn sf(z: f64) -> f64 {
    0.5 * erfc(z * FRAC_1_SQRT_2)
}

/// P(lo < Z ≤ hi) for a standard normal Z, without cancellation when both
/// ends sit in the same tail.
pub fn interval_mass(lo: f64, hi: f64) -> f64 {
    if hi <= lo {
        return 0.0;
    }
    let mass = if lo >= 0.0 {
        sf(lo) - sf(hi)
    } else if hi <= 0.0 {
        cdf(hi) - cdf(lo)
    } else {
        1.0 - cdf(lo) - sf(hi)
    };
    mass.max(0.0)
}

/// Normal density with the given mean and standard deviation.
pub fn density(x: f64, mean: f64, std_dev: f64) -> f64 {
    pdf((x - mean) / std_dev) / std_dev
}
