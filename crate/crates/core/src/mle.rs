//! Maximum-likelihood fitting of G⁰ parameters with the number of looks known.
//!
//! Three regimes: texture free (scale known), scale free (texture known), and
//! both free. The optimizer works on `u = ln(−α)`, `v = ln γ` so a plain BFGS
//! ascent stays inside the parameter space; the feasibility box is checked
//! after convergence.

use std::cell::Cell;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{self, G0Params, Sample};
use crate::optim::{self, BfgsOptions, GradientMode, Objective};
use crate::special::{digamma, ln_gamma};

/// Which parameters are estimated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Regime {
    /// `α` free, `γ` known.
    AlphaOnly,
    /// `γ` free, `α` known.
    GammaOnly,
    /// `α` and `γ` free.
    Both,
}

/// Post-hoc acceptance region `[alpha_lo, alpha_hi) × (gamma_lo, gamma_hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityBox {
    pub alpha_lo: f64,
    pub alpha_hi: f64,
    pub gamma_lo: f64,
    pub gamma_hi: f64,
}

impl FeasibilityBox {
    pub fn new(alpha_lo: f64, alpha_hi: f64, gamma_lo: f64, gamma_hi: f64) -> Result<Self> {
        if !(alpha_lo < alpha_hi && alpha_hi <= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "feasibility box needs alpha_lo < alpha_hi <= 0, got [{alpha_lo}, {alpha_hi})"
            )));
        }
        if !(gamma_lo >= 0.0 && gamma_lo < gamma_hi) {
            return Err(Error::InvalidConfig(format!(
                "feasibility box needs 0 <= gamma_lo < gamma_hi, got ({gamma_lo}, {gamma_hi}]"
            )));
        }
        Ok(Self { alpha_lo, alpha_hi, gamma_lo, gamma_hi })
    }

    /// `[f·α, 0) × (0, f·γ]` around known true parameters (simulation only).
    pub fn around_truth(alpha: f64, gamma: f64, factor: f64) -> Result<Self> {
        Self::new(factor * alpha, 0.0, 0.0, factor * gamma)
    }

    /// Default for observed data: `α ∈ [−60, −0.01)`, `γ ∈ (1e−6·mean, 1e3·mean]`.
    pub fn default_for_mean(mean: f64) -> Result<Self> {
        Self::new(-60.0, -0.01, 1e-6 * mean, 1e3 * mean)
    }

    /// Box that accepts every valid parameter pair.
    pub fn unbounded() -> Self {
        Self { alpha_lo: f64::NEG_INFINITY, alpha_hi: 0.0, gamma_lo: 0.0, gamma_hi: f64::INFINITY }
    }

    pub fn contains_alpha(&self, alpha: f64) -> bool {
        alpha >= self.alpha_lo && alpha < self.alpha_hi
    }

    pub fn contains_gamma(&self, gamma: f64) -> bool {
        gamma > self.gamma_lo && gamma <= self.gamma_hi
    }
}

/// Outcome of a fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub alpha: f64,
    pub gamma: f64,
    pub looks: f64,
    /// Full log-likelihood `Σ ln f(zᵢ)` at the estimate.
    pub loglik: f64,
    pub converged: bool,
    pub feasible: bool,
    pub iterations: usize,
    pub regime: Regime,
}

impl FitResult {
    pub fn params_hat(&self) -> Result<G0Params> {
        G0Params::new(self.alpha, self.gamma, self.looks)
    }

    /// Err unless the fit converged inside the feasibility box.
    pub fn require_feasible(self) -> Result<Self> {
        if !self.converged {
            return Err(Error::FitFailure(format!("{:?} fit stalled before convergence", self.regime)));
        }
        if !self.feasible {
            return Err(Error::FitFailure(format!(
                "{:?} estimate (alpha={}, gamma={}) outside the feasibility box",
                self.regime, self.alpha, self.gamma
            )));
        }
        Ok(self)
    }
}

/// Everything `fit` needs besides the data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitConfig {
    pub looks: f64,
    pub regime: Regime,
    /// Known `γ` for `AlphaOnly`, known `α` for `GammaOnly`.
    pub known: Option<f64>,
    pub bounds: FeasibilityBox,
    /// Starting `(α, γ)`; moment-based when absent.
    pub init: Option<(f64, f64)>,
    pub gradient: GradientMode,
    pub max_iter: usize,
    pub grad_tol: f64,
}

impl FitConfig {
    pub fn new(looks: f64, regime: Regime, known: Option<f64>, bounds: FeasibilityBox) -> Self {
        Self {
            looks,
            regime,
            known,
            bounds,
            init: None,
            gradient: GradientMode::CentralDifference,
            max_iter: 500,
            grad_tol: 1e-8,
        }
    }

    pub fn both(looks: f64, bounds: FeasibilityBox) -> Self {
        Self::new(looks, Regime::Both, None, bounds)
    }

    pub fn alpha_only(gamma: f64, looks: f64, bounds: FeasibilityBox) -> Self {
        Self::new(looks, Regime::AlphaOnly, Some(gamma), bounds)
    }

    pub fn gamma_only(alpha: f64, looks: f64, bounds: FeasibilityBox) -> Self {
        Self::new(looks, Regime::GammaOnly, Some(alpha), bounds)
    }

    fn validate(&self) -> Result<()> {
        if !(self.looks >= 1.0 && self.looks.is_finite()) {
            return Err(Error::domain(format!("looks must be >= 1, got {}", self.looks)));
        }
        match (self.regime, self.known) {
            (Regime::Both, _) => Ok(()),
            (Regime::AlphaOnly, Some(g)) if g > 0.0 && g.is_finite() => Ok(()),
            (Regime::GammaOnly, Some(a)) if a < 0.0 && a.is_finite() => Ok(()),
            (Regime::AlphaOnly, _) => Err(Error::InvalidConfig("AlphaOnly needs a known gamma > 0".into())),
            (Regime::GammaOnly, _) => Err(Error::InvalidConfig("GammaOnly needs a known alpha < 0".into())),
        }
    }
}

fn check_alpha_gamma(alpha: f64, gamma: f64) -> Result<()> {
    if !(alpha < 0.0 && alpha.is_finite()) {
        return Err(Error::domain(format!("alpha must be negative, got {alpha}")));
    }
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::domain(format!("gamma must be positive, got {gamma}")));
    }
    Ok(())
}

#[inline]
fn sum_log_shifted(values: &[f64], gamma: f64, looks: f64) -> f64 {
    values.iter().map(|&z| (gamma + looks * z).ln()).sum()
}

#[inline]
fn sum_inv_shifted(values: &[f64], gamma: f64, looks: f64) -> f64 {
    values.iter().map(|&z| 1.0 / (gamma + looks * z)).sum()
}

/// `n[lnΓ(L−α) − α lnγ − lnΓ(−α)] + α Σ ln(γ + L zᵢ)`.
pub fn loglik_alpha(alpha: f64, gamma: f64, looks: f64, z: &Sample) -> Result<f64> {
    check_alpha_gamma(alpha, gamma)?;
    let n = z.len() as f64;
    let s = sum_log_shifted(z.values(), gamma, looks);
    Ok(n * (ln_gamma(looks - alpha) - alpha * gamma.ln() - ln_gamma(-alpha)) + alpha * s)
}

/// `−nα lnγ + (α − L) Σ ln(γ + L zᵢ)`.
pub fn loglik_gamma(gamma: f64, alpha: f64, looks: f64, z: &Sample) -> Result<f64> {
    check_alpha_gamma(alpha, gamma)?;
    let n = z.len() as f64;
    let s = sum_log_shifted(z.values(), gamma, looks);
    Ok(-n * alpha * gamma.ln() + (alpha - looks) * s)
}

/// `n[lnΓ(L−α) − α lnγ − lnΓ(−α)] + (α − L) Σ ln(γ + L zᵢ)`.
pub fn loglik_both(alpha: f64, gamma: f64, looks: f64, z: &Sample) -> Result<f64> {
    check_alpha_gamma(alpha, gamma)?;
    Ok(both_from_sum(alpha, gamma, looks, z.len() as f64, sum_log_shifted(z.values(), gamma, looks)))
}

#[inline]
fn both_from_sum(alpha: f64, gamma: f64, looks: f64, n: f64, s: f64) -> f64 {
    n * (ln_gamma(looks - alpha) - alpha * gamma.ln() - ln_gamma(-alpha)) + (alpha - looks) * s
}

/// Score of the two-parameter log-likelihood, `(∂ℓ/∂α, ∂ℓ/∂γ)`.
pub fn score(alpha: f64, gamma: f64, looks: f64, values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let s = sum_log_shifted(values, gamma, looks);
    let inv = sum_inv_shifted(values, gamma, looks);
    let d_alpha = n * (digamma(-alpha) - digamma(looks - alpha)) + s - n * gamma.ln();
    let d_gamma = -n * alpha / gamma + (alpha - looks) * inv;
    (d_alpha, d_gamma)
}

/// Negative mean log-likelihood on `(u, v) = (ln(−α), ln γ)`.
struct BothObjective<'a> {
    values: &'a [f64],
    looks: f64,
    n: f64,
    // Last (γ, Σ ln(γ + L z)) pair; difference steps in u reuse it.
    cache: Cell<(f64, f64)>,
}

impl BothObjective<'_> {
    fn sum_at(&self, gamma: f64) -> f64 {
        let (g, s) = self.cache.get();
        if g == gamma {
            return s;
        }
        let s = sum_log_shifted(self.values, gamma, self.looks);
        self.cache.set((gamma, s));
        s
    }
}

impl Objective<2> for BothObjective<'_> {
    fn value(&self, x: &[f64; 2]) -> f64 {
        let alpha = -x[0].exp();
        let gamma = x[1].exp();
        if !(alpha.is_finite() && gamma.is_finite() && gamma > 0.0 && alpha < 0.0) {
            return f64::NAN;
        }
        -both_from_sum(alpha, gamma, self.looks, self.n, self.sum_at(gamma)) / self.n
    }

    fn gradient(&self, x: &[f64; 2]) -> Option<[f64; 2]> {
        let alpha = -x[0].exp();
        let gamma = x[1].exp();
        let (da, dg) = score(alpha, gamma, self.looks, self.values);
        Some([-da * alpha / self.n, -dg * gamma / self.n])
    }
}

struct AlphaObjective {
    gamma: f64,
    looks: f64,
    n: f64,
    sum: f64,
}

impl Objective<1> for AlphaObjective {
    fn value(&self, x: &[f64; 1]) -> f64 {
        let alpha = -x[0].exp();
        if !(alpha.is_finite() && alpha < 0.0) {
            return f64::NAN;
        }
        let (l, g) = (self.looks, self.gamma);
        -(self.n * (ln_gamma(l - alpha) - alpha * g.ln() - ln_gamma(-alpha)) + alpha * self.sum) / self.n
    }

    fn gradient(&self, x: &[f64; 1]) -> Option<[f64; 1]> {
        let alpha = -x[0].exp();
        let d = self.n * (digamma(-alpha) - digamma(self.looks - alpha) - self.gamma.ln()) + self.sum;
        Some([-d * alpha / self.n])
    }
}

struct GammaObjective<'a> {
    values: &'a [f64],
    alpha: f64,
    looks: f64,
    n: f64,
}

impl Objective<1> for GammaObjective<'_> {
    fn value(&self, x: &[f64; 1]) -> f64 {
        let gamma = x[0].exp();
        if !(gamma.is_finite() && gamma > 0.0) {
            return f64::NAN;
        }
        let s = sum_log_shifted(self.values, gamma, self.looks);
        -(-self.n * self.alpha * gamma.ln() + (self.alpha - self.looks) * s) / self.n
    }

    fn gradient(&self, x: &[f64; 1]) -> Option<[f64; 1]> {
        let gamma = x[0].exp();
        let inv = sum_inv_shifted(self.values, gamma, self.looks);
        let d = -self.n * self.alpha / gamma + (self.alpha - self.looks) * inv;
        Some([-d * gamma / self.n])
    }
}

/// Starting point from the first two sample moments.
///
/// Solves `E[Z²]/E[Z]² = (L+1)(−α−1) / (L(−α−2))` for `α` and then
/// `E[Z] = γ/(−α−1)` for `γ`; falls back to `α₀ = −2`, `γ₀ = mean` when the
/// moment ratio admits no root.
pub fn moment_start(values: &[f64], looks: f64) -> (f64, f64) {
    let n = values.len() as f64;
    let m1 = values.iter().sum::<f64>() / n;
    let m2 = values.iter().map(|z| z * z).sum::<f64>() / n;
    let q = m2 / (m1 * m1) * looks / (looks + 1.0);
    let alpha = if q > 1.0 && q.is_finite() { (-2.0 - 1.0 / (q - 1.0)).max(-100.0) } else { -2.0 };
    (alpha, m1 * (-alpha - 1.0))
}

/// Fit on validated raw values (all finite and positive).
pub fn fit_values(values: &[f64], cfg: &FitConfig) -> Result<FitResult> {
    cfg.validate()?;
    if values.len() < 3 {
        return Err(Error::domain(format!("fit needs at least 3 observations, got {}", values.len())));
    }
    let first = values[0];
    if values.iter().all(|&v| v == first) {
        return Err(Error::DegenerateSample { n: values.len() });
    }
    let n = values.len() as f64;
    let looks = cfg.looks;
    let opts = BfgsOptions {
        grad_tol: cfg.grad_tol,
        max_iter: cfg.max_iter,
        ..BfgsOptions::default()
    };
    let (a0, g0) = cfg.init.unwrap_or_else(|| moment_start(values, looks));

    let (alpha, gamma, iterations, converged) = match cfg.regime {
        Regime::Both => {
            check_alpha_gamma(a0, g0)?;
            let obj = BothObjective { values, looks, n, cache: Cell::new((f64::NAN, 0.0)) };
            let out = optim::minimize(&obj, [(-a0).ln(), g0.ln()], cfg.gradient, &opts);
            if out.iterations >= cfg.max_iter && !out.converged {
                return Err(Error::NonConvergence { iterations: out.iterations });
            }
            (-out.x[0].exp(), out.x[1].exp(), out.iterations, out.converged)
        }
        Regime::AlphaOnly => {
            let gamma = cfg.known.unwrap();
            let start = match cfg.init {
                Some((a, _)) => a,
                None => {
                    let m1 = values.iter().sum::<f64>() / n;
                    (-1.0 - gamma / m1).clamp(-100.0, -1.01)
                }
            };
            check_alpha_gamma(start, gamma)?;
            let obj = AlphaObjective { gamma, looks, n, sum: sum_log_shifted(values, gamma, looks) };
            let out = optim::minimize(&obj, [(-start).ln()], cfg.gradient, &opts);
            if out.iterations >= cfg.max_iter && !out.converged {
                return Err(Error::NonConvergence { iterations: out.iterations });
            }
            (-out.x[0].exp(), gamma, out.iterations, out.converged)
        }
        Regime::GammaOnly => {
            let alpha = cfg.known.unwrap();
            let start = match cfg.init {
                Some((_, g)) => g,
                None => {
                    let m1 = values.iter().sum::<f64>() / n;
                    if alpha < -1.0 { m1 * (-alpha - 1.0) } else { m1 }
                }
            };
            check_alpha_gamma(alpha, start)?;
            let obj = GammaObjective { values, alpha, looks, n };
            let out = optim::minimize(&obj, [start.ln()], cfg.gradient, &opts);
            if out.iterations >= cfg.max_iter && !out.converged {
                return Err(Error::NonConvergence { iterations: out.iterations });
            }
            (alpha, out.x[0].exp(), out.iterations, out.converged)
        }
    };

    let params = G0Params::new(alpha, gamma, looks)
        .map_err(|e| Error::FitFailure(format!("estimate left the parameter space: {e}")))?;
    let loglik: f64 = values.iter().map(|&z| model::log_pdf(&params, z).unwrap_or(f64::NAN)).sum();
    let inside = match cfg.regime {
        Regime::Both => cfg.bounds.contains_alpha(alpha) && cfg.bounds.contains_gamma(gamma),
        Regime::AlphaOnly => cfg.bounds.contains_alpha(alpha),
        Regime::GammaOnly => cfg.bounds.contains_gamma(gamma),
    };
    Ok(FitResult {
        alpha,
        gamma,
        looks,
        loglik,
        converged,
        feasible: converged && inside && loglik.is_finite(),
        iterations,
        regime: cfg.regime,
    })
}

pub fn fit(z: &Sample, cfg: &FitConfig) -> Result<FitResult> {
    fit_values(z.values(), cfg)
}
