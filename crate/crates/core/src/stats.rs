//! Two-sample statistics built on squared geodesic distances.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geodesic::{dist_alpha, dist_gamma};
use crate::mle::{fit, FeasibilityBox, FitConfig, FitResult};
use crate::model::Sample;
use crate::special::chi2_1_sf;

/// 0.95 quantile of χ²₁.
pub const CHI2_1_95: f64 = 3.841_458_820_694_124;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StatisticKind {
    #[serde(rename = "Talpha")]
    TAlpha,
    #[serde(rename = "Tgamma")]
    TGamma,
    T1,
    T2,
    T3,
}

impl StatisticKind {
    pub const COMPOSITE: [StatisticKind; 3] = [StatisticKind::T1, StatisticKind::T2, StatisticKind::T3];

    pub fn is_composite(self) -> bool {
        matches!(self, StatisticKind::T1 | StatisticKind::T2 | StatisticKind::T3)
    }

    pub fn name(self) -> &'static str {
        match self {
            StatisticKind::TAlpha => "Talpha",
            StatisticKind::TGamma => "Tgamma",
            StatisticKind::T1 => "T1",
            StatisticKind::T2 => "T2",
            StatisticKind::T3 => "T3",
        }
    }
}

impl fmt::Display for StatisticKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for StatisticKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "talpha" | "t_alpha" | "alpha" => Ok(StatisticKind::TAlpha),
            "tgamma" | "t_gamma" | "gamma" => Ok(StatisticKind::TGamma),
            "t1" => Ok(StatisticKind::T1),
            "t2" => Ok(StatisticKind::T2),
            "t3" => Ok(StatisticKind::T3),
            _ => Err(Error::InvalidConfig(format!("unknown statistic {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Calibration {
    Chi2Asymptotic,
    Permutation,
}

/// Texture plugged into the scale metric when both parameters are estimated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MetricAlpha {
    #[default]
    PooledMean,
    First,
    Second,
}

impl MetricAlpha {
    pub fn select(self, alpha1: f64, alpha2: f64) -> f64 {
        match self {
            MetricAlpha::PooledMean => 0.5 * (alpha1 + alpha2),
            MetricAlpha::First => alpha1,
            MetricAlpha::Second => alpha2,
        }
    }
}

impl FromStr for MetricAlpha {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pooled-mean" => Ok(MetricAlpha::PooledMean),
            "first" => Ok(MetricAlpha::First),
            "second" => Ok(MetricAlpha::Second),
            _ => Err(Error::InvalidConfig(format!("unknown metric alpha rule {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestOutcome {
    pub statistic: StatisticKind,
    pub value: f64,
    pub m: usize,
    pub n: usize,
    pub p_value: f64,
    pub calibration: Calibration,
}

fn size_factor(m: usize, n: usize) -> Result<f64> {
    if m == 0 || n == 0 {
        return Err(Error::domain("sample sizes must be positive"));
    }
    let (m, n) = (m as f64, n as f64);
    Ok(m * n / (m + n))
}

fn check_fits(fit1: &FitResult, fit2: &FitResult, looks: f64) -> Result<()> {
    fit1.require_feasible()?;
    fit2.require_feasible()?;
    if fit1.looks != looks || fit2.looks != looks {
        return Err(Error::InvalidConfig("fits were made with a different number of looks".into()));
    }
    Ok(())
}

/// `T_α = mn/(m+n) · s(α̂₁, α̂₂)²`.
pub fn t_alpha(fit1: &FitResult, fit2: &FitResult, m: usize, n: usize, looks: f64) -> Result<f64> {
    check_fits(fit1, fit2, looks)?;
    let d = dist_alpha(fit1.alpha, fit2.alpha, looks)?;
    Ok(size_factor(m, n)? * d * d)
}

/// `T_γ = mn/(m+n) · s(γ̂₁, γ̂₂)²` with the metric's texture set to `alpha_for_metric`.
pub fn t_gamma(
    fit1: &FitResult,
    fit2: &FitResult,
    m: usize,
    n: usize,
    alpha_for_metric: f64,
    looks: f64,
) -> Result<f64> {
    check_fits(fit1, fit2, looks)?;
    let d = dist_gamma(fit1.gamma, fit2.gamma, alpha_for_metric, looks)?;
    Ok(size_factor(m, n)? * d * d)
}

/// Combine `(T_α, T_γ)` into `T¹`, `T²` or `T³`.
pub fn combine(kind: StatisticKind, t_a: f64, t_g: f64) -> Result<f64> {
    match kind {
        StatisticKind::TAlpha => Ok(t_a),
        StatisticKind::TGamma => Ok(t_g),
        StatisticKind::T1 => Ok(t_a.hypot(t_g)),
        StatisticKind::T2 => Ok(0.5 * (t_a + t_g)),
        StatisticKind::T3 => {
            if t_a == 0.0 && t_g == 0.0 {
                Err(Error::DegenerateStatistic)
            } else if t_a == 0.0 || t_g == 0.0 {
                Ok(f64::INFINITY)
            } else {
                Ok((t_a / t_g).max(t_g / t_a))
            }
        }
    }
}

/// Any of the five statistics from a pair of fits.
pub fn statistic(
    kind: StatisticKind,
    fit1: &FitResult,
    fit2: &FitResult,
    m: usize,
    n: usize,
    looks: f64,
    metric_alpha: MetricAlpha,
) -> Result<f64> {
    let (t_a, t_g) = components(fit1, fit2, m, n, looks, metric_alpha)?;
    combine(kind, t_a, t_g)
}

/// `(T_α, T_γ)` for a pair of fits.
pub fn components(
    fit1: &FitResult,
    fit2: &FitResult,
    m: usize,
    n: usize,
    looks: f64,
    metric_alpha: MetricAlpha,
) -> Result<(f64, f64)> {
    let t_a = t_alpha(fit1, fit2, m, n, looks)?;
    let t_g = t_gamma(fit1, fit2, m, n, metric_alpha.select(fit1.alpha, fit2.alpha), looks)?;
    Ok((t_a, t_g))
}

/// Composite statistic with the scale metric evaluated at `(α̂₁ + α̂₂)/2`.
pub fn t_combined(
    kind: StatisticKind,
    fit1: &FitResult,
    fit2: &FitResult,
    m: usize,
    n: usize,
    looks: f64,
) -> Result<f64> {
    if !kind.is_composite() {
        return Err(Error::InvalidConfig(format!("{kind} is not a composite statistic")));
    }
    statistic(kind, fit1, fit2, m, n, looks, MetricAlpha::PooledMean)
}

/// `1 − F_{χ²₁}(t)`.
pub fn p_value_chi2(t: f64) -> Result<f64> {
    if !(t >= 0.0) {
        return Err(Error::domain(format!("statistic must be nonnegative, got {t}")));
    }
    Ok(chi2_1_sf(t))
}

/// One-parameter test with asymptotic χ²₁ calibration.
///
/// `TAlpha` fits the texture with `known` as the scale; `TGamma` fits the
/// scale with `known` as the texture.
pub fn chi2_test(z1: &Sample, z2: &Sample, kind: StatisticKind, known: f64, looks: f64) -> Result<TestOutcome> {
    let cfg = match kind {
        StatisticKind::TAlpha => FitConfig::alpha_only(known, looks, FeasibilityBox::unbounded()),
        StatisticKind::TGamma => FitConfig::gamma_only(known, looks, FeasibilityBox::unbounded()),
        _ => {
            return Err(Error::InvalidConfig(format!(
                "{kind} has no asymptotic reference law; use permutation calibration"
            )))
        }
    };
    let f1 = fit(z1, &cfg)?;
    let f2 = fit(z2, &cfg)?;
    let (m, n) = (z1.len(), z2.len());
    let value = statistic(kind, &f1, &f2, m, n, looks, MetricAlpha::PooledMean)?;
    Ok(TestOutcome {
        statistic: kind,
        value,
        m,
        n,
        p_value: p_value_chi2(value)?,
        calibration: Calibration::Chi2Asymptotic,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mle::Regime;
    use proptest::prelude::*;

    fn fr(alpha: f64, gamma: f64, looks: f64) -> FitResult {
        FitResult {
            alpha,
            gamma,
            looks,
            loglik: 0.0,
            converged: true,
            feasible: true,
            iterations: 1,
            regime: Regime::Both,
        }
    }

    #[test]
    fn t_alpha_values() {
        let a = fr(-1.0, 1.0, 1.0);
        let b = fr(-2.0, 1.0, 1.0);
        assert_eq!(t_alpha(&a, &a, 50, 50, 1.0).unwrap(), 0.0);
        let t = t_alpha(&a, &b, 50, 50, 1.0).unwrap();
        assert!((t - 25.0 * std::f64::consts::LN_2.powi(2)).abs() < 1e-12);
        assert!((t - 12.011_325_347_955_035).abs() < 1e-9);
    }

    #[test]
    fn t_gamma_values() {
        let a = fr(-2.0, 2.0, 1.0);
        let b = fr(-2.0, 1.0, 1.0);
        assert_eq!(t_gamma(&a, &a, 50, 50, -2.0, 1.0).unwrap(), 0.0);
        let t = t_gamma(&a, &b, 50, 50, -2.0, 1.0).unwrap();
        assert!((t - 25.0 * std::f64::consts::LN_2.powi(2) / 2.0).abs() < 1e-12);
    }

    #[test]
    fn fit_failures_propagate() {
        let mut bad = fr(-2.0, 1.0, 1.0);
        bad.feasible = false;
        let ok = fr(-2.0, 1.0, 1.0);
        assert!(matches!(t_alpha(&bad, &ok, 5, 5, 1.0), Err(Error::FitFailure(_))));
        assert!(t_alpha(&ok, &ok, 5, 5, 2.0).is_err());
    }

    #[test]
    fn composite_arithmetic() {
        assert_eq!(combine(StatisticKind::T1, 3.0, 4.0).unwrap(), 5.0);
        assert_eq!(combine(StatisticKind::T2, 3.0, 4.0).unwrap(), 3.5);
        assert_eq!(combine(StatisticKind::T3, 3.0, 4.0).unwrap(), 4.0 / 3.0);
        assert_eq!(combine(StatisticKind::T3, 2.5, 2.5).unwrap(), 1.0);
        assert_eq!(combine(StatisticKind::T3, 0.0, 2.5).unwrap(), f64::INFINITY);
        assert_eq!(combine(StatisticKind::T3, 0.0, 0.0), Err(Error::DegenerateStatistic));
        assert!(t_combined(StatisticKind::TAlpha, &fr(-2.0, 1.0, 1.0), &fr(-2.0, 1.0, 1.0), 3, 3, 1.0).is_err());
    }

    #[test]
    fn chi2_p_values() {
        assert!((p_value_chi2(3.841_459).unwrap() - 0.05).abs() < 1e-6);
        assert_eq!(p_value_chi2(0.0).unwrap(), 1.0);
        assert!((p_value_chi2(6.634_897).unwrap() - 0.01).abs() < 1e-6);
        assert!(p_value_chi2(-1.0).is_err());
        assert!((p_value_chi2(CHI2_1_95).unwrap() - 0.05).abs() < 1e-12);
    }

    #[test]
    fn metric_alpha_rules() {
        assert_eq!(MetricAlpha::PooledMean.select(-2.0, -4.0), -3.0);
        assert_eq!(MetricAlpha::First.select(-2.0, -4.0), -2.0);
        assert_eq!(MetricAlpha::Second.select(-2.0, -4.0), -4.0);
        assert_eq!("second".parse::<MetricAlpha>().unwrap(), MetricAlpha::Second);
        assert_eq!("Talpha".parse::<StatisticKind>().unwrap(), StatisticKind::TAlpha);
    }

    proptest! {
        #[test]
        fn symmetric_under_swap_and_ordered(
            a1 in -20.0f64..-1.1, a2 in -20.0f64..-1.1,
            g1 in 0.1f64..10.0, g2 in 0.1f64..10.0,
            m in 3usize..200, n in 3usize..200,
        ) {
            let f1 = fr(a1, g1, 1.0);
            let f2 = fr(a2, g2, 1.0);
            let (ta, tg) = components(&f1, &f2, m, n, 1.0, MetricAlpha::PooledMean).unwrap();
            for kind in [StatisticKind::TAlpha, StatisticKind::TGamma, StatisticKind::T1, StatisticKind::T2, StatisticKind::T3] {
                let x = statistic(kind, &f1, &f2, m, n, 1.0, MetricAlpha::PooledMean);
                let y = statistic(kind, &f2, &f1, n, m, 1.0, MetricAlpha::PooledMean);
                match (x, y) {
                    (Ok(x), Ok(y)) => prop_assert_eq!(x.to_bits(), y.to_bits()),
                    (Err(_), Err(_)) => {}
                    _ => prop_assert!(false, "swap changed fallibility"),
                }
            }
            let t1 = combine(StatisticKind::T1, ta, tg).unwrap();
            let t2 = combine(StatisticKind::T2, ta, tg).unwrap();
            prop_assert!(t1 + 1e-12 >= t2 && t2 + 1e-12 >= ta.min(tg));
            prop_assert!(t1 <= ta + tg + 1e-12);
            if ta > 0.0 || tg > 0.0 {
                prop_assert!(combine(StatisticKind::T3, ta, tg).unwrap() >= 1.0);
                prop_assert_eq!(combine(StatisticKind::T3, ta, tg).unwrap(), combine(StatisticKind::T3, tg, ta).unwrap());
            }
        }
    }
}
