//! Fisher–Rao geodesic distances between G⁰ laws that differ in one parameter.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad::{self, QuadOptions};

/// Inputs closer to zero than this make the texture integrand blow up.
pub const ALPHA_GUARD: f64 = -1e-3;

/// How a texture distance was evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Branch {
    #[serde(rename = "closed-form-L1")]
    ClosedFormL1,
    #[serde(rename = "closed-form-L2")]
    ClosedFormL2,
    #[serde(rename = "quadrature")]
    Quadrature,
    #[serde(rename = "closed-form-scale")]
    ClosedFormScale,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Distance {
    pub value: f64,
    pub branch: Branch,
    /// Number of looks actually used (integer-rounded for texture distances).
    pub looks: f64,
}

/// Looks and, for the scale distance, the texture shared by both models.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeodesicSpec {
    pub looks: f64,
    pub fixed_alpha: Option<f64>,
}

impl GeodesicSpec {
    pub fn new(looks: f64, fixed_alpha: Option<f64>) -> Result<Self> {
        check_looks(looks)?;
        if let Some(a) = fixed_alpha {
            if !(a < 0.0) {
                return Err(Error::domain(format!("fixed alpha must be negative, got {a}")));
            }
        }
        Ok(Self { looks, fixed_alpha })
    }

    pub fn alpha_distance(&self, alpha1: f64, alpha2: f64) -> Result<Distance> {
        dist_alpha_detailed(alpha1, alpha2, self.looks)
    }

    pub fn gamma_distance(&self, gamma1: f64, gamma2: f64) -> Result<f64> {
        let alpha = self
            .fixed_alpha
            .ok_or_else(|| Error::InvalidConfig("scale distance needs a fixed alpha".into()))?;
        dist_gamma(gamma1, gamma2, alpha, self.looks)
    }
}

fn check_looks(looks: f64) -> Result<()> {
    if !(looks >= 1.0 && looks.is_finite()) {
        return Err(Error::domain(format!("looks must be >= 1, got {looks}")));
    }
    Ok(())
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha < 0.0) || alpha.is_nan() {
        return Err(Error::domain(format!("alpha must be negative, got {alpha}")));
    }
    if alpha > ALPHA_GUARD {
        return Err(Error::domain(format!(
            "alpha = {alpha} is too close to zero for a stable texture distance"
        )));
    }
    if alpha.is_infinite() {
        return Err(Error::domain("alpha must be finite"));
    }
    Ok(())
}

/// Integer number of looks used by the texture metric.
pub fn integer_looks(looks: f64) -> Result<u32> {
    check_looks(looks)?;
    let rounded = looks.round();
    if rounded != looks {
        log::warn!("texture distance needs integer looks; rounding {looks} to {rounded}");
    }
    Ok(rounded as u32)
}

/// Square root of the texture information, `√(Σ_{k=1}^{L} (−α+k−1)^{−2})`.
pub fn alpha_metric(alpha: f64, looks: u32) -> f64 {
    (0..looks)
        .map(|k| {
            let d = -alpha + k as f64;
            1.0 / (d * d)
        })
        .sum::<f64>()
        .sqrt()
}

/// `R(α) = √((4α² − 4α + 2) / ((α − 1)² α²))`.
fn ratio_r(alpha: f64) -> f64 {
    ((4.0 * alpha * alpha - 4.0 * alpha + 2.0) / ((alpha - 1.0).powi(2) * alpha * alpha)).sqrt()
}

/// Antiderivative of the two-look texture metric in `x = −α`.
///
/// With `q = √(2x² + 2x + 1) = x(x+1)R/√2`:
/// `F(x) = √2 ln(√2 q + 2x + 1) − ln((1 + x + q)/x) + ln((q − x)/(x + 1))`.
fn two_look_primitive(alpha: f64) -> f64 {
    let x = -alpha;
    let root2_q = x * (x + 1.0) * ratio_r(alpha);
    let q = root2_q / std::f64::consts::SQRT_2;
    std::f64::consts::SQRT_2 * (root2_q + 2.0 * x + 1.0).ln() - ((1.0 + x + q) / x).ln()
        + ((q - x) / (x + 1.0)).ln()
}

/// Arguments in ascending order, so distances are bitwise symmetric.
fn ordered(a: f64, b: f64) -> (f64, f64) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

/// Texture distance evaluated by adaptive quadrature regardless of `L`.
pub fn dist_alpha_quadrature(alpha1: f64, alpha2: f64, looks: f64) -> Result<f64> {
    check_alpha(alpha1)?;
    check_alpha(alpha2)?;
    let l = integer_looks(looks)?;
    if alpha1 == alpha2 {
        return Ok(0.0);
    }
    let (alpha1, alpha2) = ordered(alpha1, alpha2);
    let opts = QuadOptions { abs_tol: 1e-12, rel_tol: 1e-14, max_intervals: 4000 };
    let r = quad::integrate(|a| alpha_metric(a, l), alpha1, alpha2, opts)?;
    Ok(r.value.abs())
}

pub fn dist_alpha_detailed(alpha1: f64, alpha2: f64, looks: f64) -> Result<Distance> {
    check_alpha(alpha1)?;
    check_alpha(alpha2)?;
    let l = integer_looks(looks)?;
    let (alpha1, alpha2) = ordered(alpha1, alpha2);
    let (value, branch) = match l {
        1 => ((alpha1 / alpha2).ln().abs(), Branch::ClosedFormL1),
        2 => ((two_look_primitive(alpha1) - two_look_primitive(alpha2)).abs(), Branch::ClosedFormL2),
        _ => (dist_alpha_quadrature(alpha1, alpha2, looks)?, Branch::Quadrature),
    };
    let value = if alpha1 == alpha2 { 0.0 } else { value };
    Ok(Distance { value, branch, looks: l as f64 })
}

/// Geodesic distance between `G⁰(α₁, γ, L)` and `G⁰(α₂, γ, L)`.
pub fn dist_alpha(alpha1: f64, alpha2: f64, looks: f64) -> Result<f64> {
    Ok(dist_alpha_detailed(alpha1, alpha2, looks)?.value)
}

/// Geodesic distance between `G⁰(α, γ₁, L)` and `G⁰(α, γ₂, L)`:
/// `√(−αL / (−α + L + 1)) · |ln(γ₁/γ₂)|`.
pub fn dist_gamma(gamma1: f64, gamma2: f64, alpha: f64, looks: f64) -> Result<f64> {
    if !(gamma1 > 0.0 && gamma2 > 0.0) || !gamma1.is_finite() || !gamma2.is_finite() {
        return Err(Error::domain(format!("scales must be positive, got {gamma1}, {gamma2}")));
    }
    if !(alpha < 0.0) || !alpha.is_finite() {
        return Err(Error::domain(format!("alpha must be negative, got {alpha}")));
    }
    check_looks(looks)?;
    let factor = (-alpha * looks / (-alpha + looks + 1.0)).sqrt();
    let (lo, hi) = ordered(gamma1, gamma2);
    Ok(factor * (hi / lo).ln())
}
