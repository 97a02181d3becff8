//! The G⁰ intensity distribution.
//!
//! `Z = X·Y` with unit-mean Gamma speckle `Y ~ Γ(L, L)` and reciprocal-Gamma
//! backscatter `X ~ Γ⁻¹(−α, γ)`. Texture `α < 0`, scale `γ > 0`, looks `L ≥ 1`.

use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;
use crate::special::ln_gamma;

/// Parameters `(α, γ, L)` of a G⁰ law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawParams")]
pub struct G0Params {
    alpha: f64,
    gamma: f64,
    looks: f64,
}

#[derive(Deserialize)]
struct RawParams {
    alpha: f64,
    gamma: f64,
    looks: f64,
}

impl TryFrom<RawParams> for G0Params {
    type Error = Error;
    fn try_from(r: RawParams) -> Result<Self> {
        G0Params::new(r.alpha, r.gamma, r.looks)
    }
}

impl G0Params {
    pub fn new(alpha: f64, gamma: f64, looks: f64) -> Result<Self> {
        if !(alpha < 0.0 && alpha.is_finite()) {
            return Err(Error::domain(format!("alpha must be negative and finite, got {alpha}")));
        }
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(Error::domain(format!("gamma must be positive and finite, got {gamma}")));
        }
        if !(looks >= 1.0 && looks.is_finite()) {
            return Err(Error::domain(format!("looks must be >= 1, got {looks}")));
        }
        Ok(Self { alpha, gamma, looks })
    }

    /// `G⁰(α, −α−1, 1)`, the unit-mean single-look law.
    pub fn unit_mean(alpha: f64) -> Result<Self> {
        Self::new(alpha, unit_mean_gamma(alpha)?, 1.0)
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn looks(&self) -> f64 {
        self.looks
    }

    /// Logarithm of the normalizing constant `L^L Γ(L−α) / (γ^α Γ(−α) Γ(L))`.
    fn ln_norm(&self) -> f64 {
        let (a, g, l) = (self.alpha, self.gamma, self.looks);
        l * l.ln() + ln_gamma(l - a) - a * g.ln() - ln_gamma(-a) - ln_gamma(l)
    }
}

/// An ordered collection of strictly positive intensities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    values: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    label: Option<String>,
}

impl Sample {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::domain("sample must contain at least one value"));
        }
        if let Some((i, v)) = values.iter().enumerate().find(|(_, v)| !(**v > 0.0 && v.is_finite())) {
            return Err(Error::domain(format!("sample value #{i} = {v} is not a positive finite number")));
        }
        Ok(Self { values, label: None })
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn label(&self) -> Option<&str> {
        self.label.as_deref()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// Multiply every observation by `c > 0`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        Sample::new(self.values.iter().map(|v| v * c).collect())
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

fn check_support(z: f64) -> Result<()> {
    if !(z > 0.0) || z.is_nan() {
        return Err(Error::domain(format!("density support is z > 0, got {z}")));
    }
    Ok(())
}

/// Density of `G⁰(α, γ, L)` at `z`. May underflow to 0 in the far tail; use
/// [`log_pdf`] for likelihood work.
pub fn pdf(params: &G0Params, z: f64) -> Result<f64> {
    Ok(log_pdf(params, z)?.exp())
}

pub fn log_pdf(params: &G0Params, z: f64) -> Result<f64> {
    check_support(z)?;
    let (a, g, l) = (params.alpha, params.gamma, params.looks);
    Ok(params.ln_norm() + (l - 1.0) * z.ln() - (l - a) * (g + z * l).ln())
}

/// `E[Z^r] = (γ/L)^r Γ(−α−r) Γ(L+r) / (Γ(−α) Γ(L))`, finite only for `r < −α`.
pub fn moment(params: &G0Params, r: f64) -> Result<f64> {
    let (a, g, l) = (params.alpha, params.gamma, params.looks);
    if !r.is_finite() || r <= -l {
        return Err(Error::domain(format!("moment order must satisfy r > -L, got {r}")));
    }
    if r >= -a {
        return Err(Error::Divergence { order: r, alpha: a });
    }
    let ln = r * (g / l).ln() + ln_gamma(-a - r) - ln_gamma(-a) + ln_gamma(l + r) - ln_gamma(l);
    Ok(ln.exp())
}

/// Scale giving unit mean at one look: `γ* = −α − 1`.
pub fn unit_mean_gamma(alpha: f64) -> Result<f64> {
    if !(alpha < -1.0) {
        return Err(Error::domain(format!(
            "a unit-mean scale exists only for alpha < -1, got {alpha}"
        )));
    }
    Ok(-alpha - 1.0)
}

/// Draw `n` variates from `G⁰(α, γ, L)` using `rng`.
pub fn sample_with<R: Rng + ?Sized>(params: &G0Params, n: usize, rng: &mut R) -> Result<Sample> {
    if n == 0 {
        return Err(Error::domain("sample size must be at least 1"));
    }
    let speckle = Gamma::new(params.looks, 1.0 / params.looks)
        .map_err(|e| Error::domain(e.to_string()))?;
    let texture = Gamma::new(-params.alpha, 1.0 / params.gamma)
        .map_err(|e| Error::domain(e.to_string()))?;
    let mut values = Vec::with_capacity(n);
    while values.len() < n {
        let y: f64 = speckle.sample(rng);
        let x: f64 = texture.sample(rng);
        let z = y / x;
        // Both factors are a.s. positive; guard against underflow/overflow.
        if z > 0.0 && z.is_finite() {
            values.push(z);
        }
    }
    Sample::new(values)
}

/// Draw `n` variates deterministically from `seed`.
pub fn sample(params: &G0Params, n: usize, seed: u64) -> Result<Sample> {
    sample_with(params, n, &mut rng::stream(seed))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn invalid_params_rejected() {
        assert!(G0Params::new(0.0, 1.0, 1.0).is_err());
        assert!(G0Params::new(-1.0, 0.0, 1.0).is_err());
        assert!(G0Params::new(-1.0, 1.0, 0.5).is_err());
        assert!(G0Params::new(f64::NAN, 1.0, 1.0).is_err());
        assert!(serde_json::from_str::<G0Params>(r#"{"alpha":1,"gamma":1,"looks":1}"#).is_err());
    }

    #[test]
    fn density_domain_errors() {
        let p = G0Params::new(-2.0, 1.0, 1.0).unwrap();
        assert!(pdf(&p, 0.0).is_err());
        assert!(log_pdf(&p, -1.0).is_err());
        assert!(pdf(&p, 1.0).unwrap() > 0.0);
    }

    #[test]
    fn density_limit_at_origin_single_look() {
        // At L = 1 the density at 0+ is (−α)/γ; for α = −2, γ = 1 that is 2.
        let p = G0Params::new(-2.0, 1.0, 1.0).unwrap();
        assert!((pdf(&p, 1e-300).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn exp_log_pdf_equals_direct_formula() {
        // Independent route: evaluate the density with Γ directly.
        use statrs::function::gamma::gamma as g;
        let p = G0Params::new(-3.0, 2.0, 1.0).unwrap();
        for z in [0.1f64, 1.0, 10.0] {
            let (a, gm, l) = (p.alpha, p.gamma, p.looks);
            let direct = l.powf(l) * g(l - a) / (gm.powf(a) * g(-a) * g(l)) * z.powf(l - 1.0)
                / (gm + z * l).powf(l - a);
            let got = log_pdf(&p, z).unwrap().exp();
            assert!(((got - direct) / direct).abs() < 1e-10, "z={z}: {got} vs {direct}");
        }
    }

    #[test]
    fn log_pdf_finite_far_from_unit_texture() {
        // mpmath, 30 digits: log f(1) for α = −50, γ = 49, L = 2.
        let p = G0Params::new(-50.0, 49.0, 2.0).unwrap();
        let want = -0.633_774_996_861_247_165_895_283_219_4;
        let got = log_pdf(&p, 1.0).unwrap();
        assert!(((got - want) / want).abs() < 1e-10, "{got}");
    }

    #[test]
    fn log_pdf_decreases_in_the_tail() {
        let p = G0Params::new(-1.5, 0.5, 2.0).unwrap();
        let mut prev = log_pdf(&p, 5.0).unwrap();
        for k in 1..50 {
            let v = log_pdf(&p, 5.0 + k as f64).unwrap();
            assert!(v < prev);
            prev = v;
        }
    }

    #[test]
    fn moments() {
        let p = G0Params::new(-2.0, 1.0, 1.0).unwrap();
        assert!((moment(&p, 1.0).unwrap() - 1.0).abs() < 1e-12);
        let p = G0Params::new(-1.5, 0.5, 1.0).unwrap();
        assert!((moment(&p, 1.0).unwrap() - 1.0).abs() < 1e-12);
        assert!(matches!(moment(&p, 1.5), Err(Error::Divergence { .. })));
    }

    #[test]
    fn unit_mean_relation() {
        assert_eq!(unit_mean_gamma(-1.5).unwrap(), 0.5);
        assert_eq!(unit_mean_gamma(-3.0).unwrap(), 2.0);
        assert!(unit_mean_gamma(-1.0).is_err());
        for a in [-1.2, -2.0, -7.5, -40.0] {
            let p = G0Params::unit_mean(a).unwrap();
            assert!((moment(&p, 1.0).unwrap() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn sampling_is_deterministic() {
        let p = G0Params::new(-2.0, 1.0, 1.0).unwrap();
        assert_eq!(sample(&p, 100, 5).unwrap(), sample(&p, 100, 5).unwrap());
        assert_ne!(sample(&p, 100, 5).unwrap(), sample(&p, 100, 6).unwrap());
        assert!(sample(&p, 0, 1).is_err());
    }

    #[test]
    fn sample_rejects_nonpositive_values() {
        assert!(Sample::new(vec![]).is_err());
        assert!(Sample::new(vec![1.0, 0.0]).is_err());
        assert!(Sample::new(vec![1.0, f64::INFINITY]).is_err());
    }
}
